"""Time loop: pressure solve, obstacle phase solve, adaptive remeshing.

Each step solves the linear pressure system from the old fields, checks the
discrete maximum principle, solves the phase variational inequality with the
fresh pressure, records the per-step energy diagnostics, and finally adapts
the mesh to the moved interface (refine, then coarsen, then one field
transfer).  Runs are deterministic: sweeps use a fixed node order and the
remesh sequence depends only on the fields.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from tgfem import mesh as msh
from tgfem import phase as ph
from tgfem import pressure as pr
from tgfem.errors import ConfigError, MaxPrincipleError, MeshError
from tgfem.fem import NodalField
from tgfem.mesh import Zone

log = logging.getLogger(__name__)

_INIT_ROUNDS = 40


@dataclass
class SimParams:
    """Physical and numerical parameters of one simulation run."""

    Q: float
    alpha: float
    beta: float
    epsilon: float
    dt: float
    T: float
    domain: tuple  # (x0, y0, x1, y1), the solved (quadrant) box
    h_max_f: float
    h_max_m: float = None
    h_max_c: float = None
    initial: str = "circle"      # circle | ellipse
    R0: float = 1.0
    u0: float = 0.0
    cutoff: float = 0.99
    pcg_tol: float = 1e-10
    sor_omega: float = 1.5
    sor_tol: float = 1e-8
    sor_max_iter: int = 20000
    sor_ordering: str = "natural"
    remesh_every: int = 1
    max_principle_tol: float = 1e-10

    def __post_init__(self):
        if self.h_max_m is None:
            self.h_max_m = min(0.02, 16.0 * self.h_max_f)
        if self.h_max_c is None:
            self.h_max_c = min(2.5, 128.0 * self.h_max_m)
        for name in ("Q", "alpha", "beta", "epsilon", "dt", "T"):
            if getattr(self, name) < 0 or (name != "T" and getattr(self, name) == 0):
                raise ConfigError(f"{name} must be positive")
        if not self.dt < self.epsilon ** 2 / self.beta:
            raise ConfigError(
                f"dt={self.dt} must satisfy dt < eps^2/beta = "
                f"{self.epsilon ** 2 / self.beta}")
        if not self.h_max_f <= self.h_max_m <= self.h_max_c:
            raise ConfigError("mesh targets must satisfy h_max_f <= h_max_m <= h_max_c")
        if self.h_max_m > 16.0 * self.h_max_f + 1e-12:
            raise ConfigError("h_max_m must not exceed 16 * h_max_f")
        if self.h_max_c > 128.0 * self.h_max_m + 1e-9:
            raise ConfigError("h_max_c must not exceed 128 * h_max_m")
        if self.initial not in ("circle", "ellipse"):
            raise ConfigError(f"unknown initial profile {self.initial!r}")

    def zone_targets(self):
        return np.array([self.h_max_f, self.h_max_m, self.h_max_c])

    def n_steps(self):
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ConfigError("T must be an integer multiple of dt")
        return n

    def steady_circle_criterion(self):
        """(satisfied, 3*alpha*beta, 2*Q^3): circles are steady when lhs > rhs."""
        lhs = 3.0 * self.alpha * self.beta
        rhs = 2.0 * self.Q ** 3
        return lhs > rhs, lhs, rhs


def _sin_profile(r, epsilon):
    half = 0.5 * math.pi * epsilon
    r = np.asarray(r, dtype=np.float64)
    return np.where(r >= half, 1.0,
                    np.where(r <= -half, -1.0, np.sin(r / epsilon)))


def ellipse_phase_profile(x, epsilon):
    """Initial phase for an ellipse of half-width 0.5 and half-height 1."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = 1.0 - np.sqrt(4.0 * x[:, 0] ** 2 + x[:, 1] ** 2)
    return _sin_profile(r, epsilon)


def circle_phase_profile(x, R0, epsilon):
    """Initial phase for a circle of radius R0 centred at the origin."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = R0 - np.hypot(x[:, 0], x[:, 1])
    return _sin_profile(r, epsilon)


def initial_profile(params, points):
    if params.initial == "circle":
        return circle_phase_profile(points, params.R0, params.epsilon)
    return ellipse_phase_profile(points, params.epsilon)


@dataclass
class StepDiagnostics:
    t: float
    u_min: float
    u_max: float
    phi_min: float
    phi_max: float
    identity_err: float      # relative error of the pressure energy identity
    phase_slack: float       # stability inequality slack (>= 0 when it holds)
    vi_res: float            # complementarity certificate after the phase solve
    pcg_iters: int
    sor_sweeps: int
    fine_area: float         # measure of the interfacial (fine) zone
    n_nodes: int
    n_elements: int


@dataclass
class SimState:
    t: float
    step_index: int
    mesh: msh.Mesh
    phi: NodalField
    u: NodalField
    u0_inf: float
    diagnostics: list = field(default_factory=list)


def _mark_for_bisection(mesh, phi_vals, params):
    zones = msh.classify_zones(mesh, phi_vals, params.cutoff)
    targets = params.zone_targets()[zones]
    return np.flatnonzero(mesh.diameters() > targets * (1.0 + 1e-12))


def _mark_for_coarsening(mesh, phi_vals, params):
    zones = msh.classify_zones(mesh, phi_vals, params.cutoff)
    targets = params.zone_targets()[zones]
    return np.flatnonzero(mesh.diameters() * 2.0 <= targets)


def initialize(params) -> SimState:
    """Build the initial state: profile-adapted mesh, interpolated fields."""
    x0, y0, x1, y1 = params.domain
    n = max(1, math.ceil((x1 - x0) * math.sqrt(2.0) / params.h_max_c))
    mesh = msh.generate_square_mesh(params.domain, n)
    for _ in range(_INIT_ROUNDS):
        phi_vals = initial_profile(params, mesh.nodes)
        marks = _mark_for_bisection(mesh, phi_vals, params)
        if marks.size == 0:
            break
        mesh = msh.bisect(mesh, marks)
    else:
        raise MeshError(f"initial refinement did not reach the zone targets "
                        f"in {_INIT_ROUNDS} rounds")
    phi = NodalField(initial_profile(params, mesh.nodes), mesh)
    u = NodalField(np.full(mesh.node_count, float(params.u0)), mesh)
    return SimState(t=0.0, step_index=0, mesh=mesh, phi=phi, u=u,
                    u0_inf=abs(float(params.u0)))


def remesh(mesh, phi_vals, u_vals, params, max_rounds=_INIT_ROUNDS):
    """Adapt the mesh to the zone targets and transfer both fields.

    Refinement rounds run first, then coarsening rounds; the fields are
    carried through the chain so that the final values equal the
    piecewise-linear interpolant of the pre-remesh fields.
    """
    chain = [mesh]
    phi_cur = phi_vals
    for _ in range(max_rounds):
        marks = _mark_for_bisection(chain[-1], phi_cur, params)
        if marks.size == 0:
            break
        new = msh.bisect(chain[-1], marks)
        phi_cur = msh.apply_lineage(new, phi_cur)
        chain.append(new)
    for _ in range(max_rounds):
        marks = _mark_for_coarsening(chain[-1], phi_cur, params)
        if marks.size == 0:
            break
        new = msh.coarsen(chain[-1], marks)
        if new is chain[-1]:
            break
        phi_cur = msh.apply_lineage(new, phi_cur)
        chain.append(new)
    if len(chain) == 1:
        return mesh, phi_vals, u_vals
    u_cur = u_vals
    for m in chain[1:]:
        u_cur = msh.apply_lineage(m, u_cur)
    return chain[-1], phi_cur, u_cur


def step(state: SimState, params) -> SimState:
    """Advance one time step: pressure, phase, diagnostics, remesh."""
    mesh = state.mesh
    t_new = (state.step_index + 1) * params.dt

    psys = pr.build_pressure_system(mesh, state.phi, state.u, params)
    u1, pcg_iters = pr.pcg_solve(psys.matrix, psys.rhs, x0=state.u.values,
                                 rel_tol=params.pcg_tol)
    report = pr.verify_max_principle(u1, state.u0_inf, t_new, params,
                                     tol=params.max_principle_tol)
    if not report.ok:
        raise MaxPrincipleError(
            f"maximum principle violated at t={t_new}: "
            f"u range [{report.min_value}, {report.max_value}] outside "
            f"[{report.lower}, {report.upper}] at node {report.worst_node}")
    _, _, identity_err = pr.pressure_energy_identity(psys, state.u, u1, params)

    gsys = ph.build_phase_system(mesh, state.phi, u1, params)
    phi1 = state.phi.values
    tol = params.sor_tol
    sweeps_total = 0
    for _ in range(4):
        phi1, sweeps = ph.projected_sor(gsys, phi1, omega=params.sor_omega,
                                        tol=tol, max_iter=params.sor_max_iter,
                                        ordering=params.sor_ordering)
        sweeps_total += sweeps
        vi_res = ph.vi_residual(gsys, phi1)
        if vi_res <= 1e-8:
            break
        tol *= 0.1  # stop rule is sweep-delta based; certify and retry tighter

    slack = ph.phase_stability_slack(mesh, state.phi, phi1, u1, params)

    zones = msh.classify_zones(mesh, phi1, params.cutoff)
    fine_area = float(mesh.areas()[zones == Zone.FINE].sum())
    diag = StepDiagnostics(
        t=t_new, u_min=float(u1.min()), u_max=float(u1.max()),
        phi_min=float(phi1.min()), phi_max=float(phi1.max()),
        identity_err=identity_err, phase_slack=slack, vi_res=vi_res,
        pcg_iters=pcg_iters, sor_sweeps=sweeps_total, fine_area=fine_area,
        n_nodes=mesh.node_count, n_elements=mesh.element_count)

    new_index = state.step_index + 1
    if params.remesh_every > 0 and new_index % params.remesh_every == 0:
        mesh2, phi2, u2 = remesh(mesh, phi1, u1, params)
    else:
        mesh2, phi2, u2 = mesh, phi1, u1

    new_state = SimState(t=t_new, step_index=new_index, mesh=mesh2,
                         phi=NodalField(phi2, mesh2), u=NodalField(u2, mesh2),
                         u0_inf=state.u0_inf,
                         diagnostics=state.diagnostics)
    new_state.diagnostics.append(diag)
    return new_state


def run(params, observers=()):
    """Execute all time steps; observers see every state after its step.

    Observers are called as ``observer(state, diag)`` with ``diag`` None for
    the initial state.  Returns the final state (diagnostics attached).
    """
    state = initialize(params)
    for obs in observers:
        obs(state, None)
    n = params.n_steps()
    for k in range(n):
        state = step(state, params)
        for obs in observers:
            obs(state, state.diagnostics[-1])
        if log.isEnabledFor(logging.DEBUG) and (k + 1) % 100 == 0:
            log.debug("step %d/%d t=%.4f nodes=%d", k + 1, n, state.t,
                      state.mesh.node_count)
    return state
