"""Phase step: the double-obstacle variational inequality, solved by
projected SOR.

Mass lumping makes the inequality componentwise: a nodal vector solves it iff
at every node the residual of the linear system vanishes when the value is
interior, is nonpositive at the upper obstacle and nonnegative at the lower
one.  Projected SOR converges to that unique solution whenever the time step
keeps the diagonal positive, which is exactly the uniqueness condition
dt < eps^2 / beta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from tgfem import fem
from tgfem._kernels import psor_sweeps
from tgfem.errors import ConfigError, SolverError
from tgfem.fem import C_W


@dataclass
class PhaseSystem:
    matrix: sp.csr_matrix     # G = eps*beta*K + (eps/dt - beta/eps) * diag(m)
    diag: np.ndarray
    rhs: np.ndarray
    mass: np.ndarray
    lo: float = -1.0
    hi: float = 1.0


def build_phase_system(mesh, phi_n, u_np1, params) -> PhaseSystem:
    """Assemble the componentwise obstacle problem for the new phase field."""
    eps = params.epsilon
    dt = params.dt
    beta = params.beta
    if not dt < eps * eps / beta:
        raise ConfigError(
            f"dt={dt} must satisfy dt < eps^2/beta = {eps * eps / beta} "
            "(uniqueness of the phase step)")
    phi = np.asarray(getattr(phi_n, "values", phi_n), dtype=np.float64)
    u = np.asarray(getattr(u_np1, "values", u_np1), dtype=np.float64)

    cache = fem.fem_cache(mesh)
    m = cache.lumped
    K = fem.assemble_stiffness(mesh)
    shift = (eps / dt - beta / eps) * m
    data = (eps * beta) * K.data
    data[cache.diag_slots] += shift
    G = sp.csr_matrix((data, cache.indices, cache.indptr), shape=K.shape)
    rhs = (eps / dt) * m * phi + (C_W / params.alpha) * m * u
    return PhaseSystem(G, data[cache.diag_slots].copy(), rhs, m)


def _sweep_order(system, ordering):
    n = system.rhs.shape[0]
    if ordering == "natural":
        return np.arange(n, dtype=np.int32)
    if ordering == "colored":
        # Greedy multicolouring of the node adjacency; nodes inside one colour
        # class are independent, so each class could sweep in parallel.  A
        # triangulation contains 3-cliques, hence at least three colours.
        indptr, indices = system.matrix.indptr, system.matrix.indices
        color = np.full(n, -1, dtype=np.int64)
        for j in range(n):
            used = {color[i] for i in indices[indptr[j]:indptr[j + 1]] if color[i] >= 0}
            c = 0
            while c in used:
                c += 1
            color[j] = c
        return np.argsort(color, kind="stable").astype(np.int32)
    raise ConfigError(f"unknown SOR ordering: {ordering!r}")


def projected_sor(system, phi_init, omega=1.5, tol=1e-8, max_iter=20000,
                  ordering="natural"):
    """Solve the componentwise obstacle problem by projected SOR.

    Sweeps update nodes in ascending index order (deterministic default) and
    clamp every update into [lo, hi], so the output is admissible by
    construction.  Stops when the largest nodal change in a sweep is at most
    ``tol``; raises SolverError with the final sweep delta on stagnation.
    Returns (solution, sweeps).
    """
    if not 0.0 < omega < 2.0:
        raise ConfigError("SOR relaxation factor must lie in (0, 2)")
    if np.any(system.diag <= 0.0):
        raise ConfigError("phase system diagonal must be positive")
    A = system.matrix
    x = np.array(getattr(phi_init, "values", phi_init), dtype=np.float64)
    np.clip(x, system.lo, system.hi, out=x)
    order = _sweep_order(system, ordering)
    sweeps, delta, converged = psor_sweeps(
        A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data,
        system.diag, system.rhs, x, order,
        system.lo, system.hi, float(omega), float(tol), int(max_iter))
    if not converged:
        raise SolverError(f"projected SOR stalled after {sweeps} sweeps "
                          f"(last sweep delta {delta:.3e} > tol {tol:.3e})")
    return x, sweeps


def vi_residual(system, phi):
    """Scaled complementarity certificate; zero exactly at the VI solution.

    Interior nodes contribute the full linear residual, nodes at the upper
    obstacle only its positive part, nodes at the lower obstacle only its
    negative part.  The maximum is scaled by 1 / max(1, ||rhs||_inf).
    """
    x = np.asarray(getattr(phi, "values", phi), dtype=np.float64)
    g = system.matrix @ x - system.rhs
    interior = np.abs(x) < 1.0 - 1e-12
    at_hi = x >= 1.0 - 1e-12
    at_lo = x <= -1.0 + 1e-12
    r = np.zeros_like(g)
    r[interior] = np.abs(g[interior])
    r[at_hi] = np.maximum(0.0, g[at_hi])
    r[at_lo] = np.maximum(0.0, -g[at_lo])
    scale = max(1.0, float(np.abs(system.rhs).max(initial=0.0)))
    return float(r.max(initial=0.0)) / scale


def phase_stability_slack(mesh, phi_n, phi_np1, u_np1, params):
    """Slack of the per-step phase stability inequality (nonnegative when it holds).

    Monitored with the new pressure on the right-hand side, matching the
    forcing actually used by the scheme.
    """
    p0 = np.asarray(getattr(phi_n, "values", phi_n), dtype=np.float64)
    p1 = np.asarray(getattr(phi_np1, "values", phi_np1), dtype=np.float64)
    u1 = np.asarray(getattr(u_np1, "values", u_np1), dtype=np.float64)
    eps = params.epsilon
    dt = params.dt
    beta = params.beta

    m = fem.lumped_mass(mesh)
    K = fem.assemble_stiffness(mesh)
    nsq = lambda v: float(np.dot(m * v, v))
    grad_sq = lambda v: float(v @ (K @ v))
    d = p1 - p0
    lhs = 0.5 * dt * nsq(d / dt) + 0.5 * beta * (grad_sq(p1) - grad_sq(p0))
    rhs = 0.5 * dt * (C_W / (eps * params.alpha)) ** 2 * nsq(u1) \
        + 0.5 * beta / (eps * eps) * (nsq(p1) - nsq(p0))
    return rhs - lhs
