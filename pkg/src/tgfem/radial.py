"""Radially symmetric reduction: ODE oracle, radius extraction, error metric.

For circular interfaces the sharp-interface problem collapses to a scalar ODE
for the radius together with a closed-form radial pressure profile.  The ODE
is integrated to high accuracy and compared against radii extracted from the
finite element runs; the summed squared mismatch over 51 uniformly spaced
sample times on [0, 0.5] is the benchmark error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from tgfem.errors import ConfigError
from tgfem.mesh import evaluate_values


def radial_rhs(R, params):
    """Interface speed of a circle of radius R; independent of alpha."""
    if R <= 0.0:
        raise ConfigError("radial speed is defined for positive radii only")
    return -params.beta / R + params.Q - 0.5 * R


def steady_radius(params):
    """Stable equilibrium radius, or None when no positive root exists."""
    disc = params.Q ** 2 - 2.0 * params.beta
    if disc < 0.0:
        return None
    return params.Q + math.sqrt(disc)


@dataclass
class RadialSolution:
    times: np.ndarray
    radii: np.ndarray
    Q: float
    alpha: float
    beta: float
    R0: float
    collapsed: bool = False   # radius hit zero inside the horizon
    t_collapse: float = None


def integrate_radius(R0, params, sample_times, rtol=1e-10, atol=1e-12):
    """Sample the radius ODE with an adaptive embedded Runge-Kutta scheme.

    Radii after a collapse to zero are reported as NaN and the event is
    flagged on the returned solution.
    """
    if R0 <= 0.0:
        raise ConfigError("R0 must be positive")
    ts = np.asarray(sample_times, dtype=np.float64)

    def f(_, y):
        return [-params.beta / y[0] + params.Q - 0.5 * y[0]]

    def collapse(_, y):
        return y[0] - 1e-8
    collapse.terminal = True
    collapse.direction = -1

    sol = solve_ivp(f, (0.0, float(ts[-1]) if ts.size else 0.0), [float(R0)],
                    method="RK45", t_eval=ts, rtol=rtol, atol=atol,
                    events=collapse)
    radii = np.full(ts.shape, np.nan)
    radii[: sol.y.shape[1]] = sol.y[0]
    collapsed = bool(sol.t_events[0].size)
    t_collapse = float(sol.t_events[0][0]) if collapsed else None
    return RadialSolution(ts, radii, params.Q, params.alpha, params.beta,
                          float(R0), collapsed, t_collapse)


def pressure_profile(r, R, params):
    """Radial pressure inside a circle of radius R (0 <= r <= R)."""
    r = np.asarray(r, dtype=np.float64)
    return 0.25 * r * r + params.alpha * params.Q \
        - 0.5 * params.alpha * R - 0.25 * R * R


def extract_radius(state, params):
    """Interface radius from the zero crossing of the phase along the x-axis.

    Samples the discrete phase at spacing h_max_f / 2 starting from the
    domain corner and returns the linearly interpolated first crossing from
    positive to nonpositive values.  Returns None when there is no crossing
    (the tumour vanished, or fills the sampled ray).
    """
    x0, y0, _, _ = params.domain
    width = params.domain[2] - x0
    ds = 0.5 * params.h_max_f
    s = np.arange(0.0, width + 0.5 * ds, ds)
    s[-1] = min(s[-1], width)
    pts = np.column_stack([x0 + s, np.full(s.shape, y0)])
    vals = evaluate_values(state.mesh, state.phi.values, pts)
    if vals[0] <= 0.0:
        return None  # vanished (no interior at the corner)
    below = np.flatnonzero(vals <= 0.0)
    if below.size == 0:
        return None  # fills the whole ray
    k = int(below[0])
    f0, f1 = vals[k - 1], vals[k]
    return float(s[k - 1] + ds * f0 / (f0 - f1))


def extract_radius_area(state):
    """Radius of the circle matching the tumour area on the quadrant.

    The interior indicator (1 + phi)/2 of a P1 phase field integrates exactly
    with the lumped mass, giving a cheap cross-check of the ray estimate.
    """
    from tgfem.fem import lumped_mass

    m = lumped_mass(state.mesh)
    area = float(np.dot(m, 0.5 * (1.0 + state.phi.values)))
    return math.sqrt(max(area, 0.0) * 4.0 / math.pi)


@dataclass
class ErrorReport:
    """Summed squared radius error over the benchmark sample times."""

    E_r: float
    times: np.ndarray
    differences: np.ndarray
    config: dict

    def __post_init__(self):
        assert self.E_r >= 0.0


def radial_error(sim_samples, oracle_samples, config=None):
    """E_r = sum of squared radius differences at matched sample times."""
    sim = np.asarray(sim_samples, dtype=np.float64)
    ora = np.asarray(oracle_samples, dtype=np.float64)
    if sim.shape != ora.shape:
        raise ConfigError(
            f"sample count mismatch: {sim.shape[0]} simulated vs "
            f"{ora.shape[0]} oracle radii")
    diff = sim - ora
    return ErrorReport(float(np.dot(diff, diff)),
                       0.01 * np.arange(sim.shape[0]), diff, config or {})


def benchmark_sample_times(T=0.5, spacing=0.01):
    """The benchmark grid t_n = spacing * n covering [0, T]."""
    n = int(round(T / spacing))
    return spacing * np.arange(n + 1)
