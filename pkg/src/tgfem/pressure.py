"""Pressure step: assemble and solve the linear SPD system for the new pressure.

The bilinear form couples a scaled lumped mass (time derivative), the
mobility-weighted stiffness, and a lumped zero-order term weighted by the
interface coefficient.  Both weights vanish at the pure exterior phase, where
only the diagonal mass block remains; the system stays symmetric positive
definite without any regularisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from tgfem import fem
from tgfem.errors import SolverError
from tgfem.fem import NodalField


@dataclass
class PressureSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    mass: np.ndarray          # lumped mass m_j
    k_zeta: sp.csr_matrix     # mobility-weighted stiffness (for diagnostics)
    zeta_n: np.ndarray        # mobility at the old phase, per node
    delta_n: np.ndarray       # interface weight at the old phase, per node


def build_pressure_system(mesh, phi_n, u_n, params) -> PressureSystem:
    """System for the new pressure given the old phase and pressure fields."""
    phi = np.asarray(getattr(phi_n, "values", phi_n), dtype=np.float64)
    u = np.asarray(getattr(u_n, "values", u_n), dtype=np.float64)
    eps = params.epsilon
    dt = params.dt

    cache = fem.fem_cache(mesh)
    m = cache.lumped
    k_zeta = fem.assemble_weighted_stiffness(mesh, phi)
    zeta_n = fem.zeta(phi)
    delta_n = fem.delta(phi)

    diag_extra = (eps * eps / dt) * m + (1.0 / (eps * params.alpha)) * m * delta_n
    data = k_zeta.data.copy()
    data[cache.diag_slots] += diag_extra
    matrix = sp.csr_matrix((data, cache.indices, cache.indptr),
                           shape=k_zeta.shape)

    rhs = (eps * eps / dt) * m * u + m * ((params.Q / eps) * delta_n - zeta_n)
    return PressureSystem(matrix, rhs, m, k_zeta, zeta_n, delta_n)


def pcg_solve(A, b, x0=None, rel_tol=1e-10, max_iter=None):
    """Conjugate gradients with diagonal (Jacobi) preconditioning.

    Stops when ||A x - b|| <= max(rel_tol * ||b||, 1e-14).  Returns the
    solution and the iteration count; raises SolverError past ``max_iter``
    (default 10 n), which signals an ill-conditioned system.
    """
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    inv_diag = 1.0 / A.diagonal()
    target = max(rel_tol * float(np.linalg.norm(b)), 1e-14)

    r = b - A @ x
    if np.linalg.norm(r) <= target:
        return x, 0
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            return x, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not reach {target:.3e} within {max_iter} iterations "
                      f"(residual {np.linalg.norm(r):.3e})")


@dataclass
class MaxPrincipleReport:
    ok: bool
    lower: float
    upper: float
    min_value: float
    max_value: float
    worst_node: int


def verify_max_principle(u_np1, u0_inf, t_np1, params, tol=1e-10):
    """Check the nodal pressure bounds that hold on nonobtuse meshes.

    The admissible band at time t is
    [-u0_inf - t / eps^2, max(alpha * Q, u0_inf)] up to ``tol``.
    """
    u = np.asarray(getattr(u_np1, "values", u_np1), dtype=np.float64)
    lower = -u0_inf - t_np1 / (params.epsilon ** 2)
    upper = max(params.alpha * params.Q, u0_inf)
    jmin = int(np.argmin(u))
    jmax = int(np.argmax(u))
    low_bad = u[jmin] < lower - tol
    high_bad = u[jmax] > upper + tol
    worst = jmin if low_bad else (jmax if high_bad else -1)
    return MaxPrincipleReport(not (low_bad or high_bad), lower, upper,
                              float(u[jmin]), float(u[jmax]), worst)


def pressure_energy_identity(system, u_n, u_np1, params):
    """Per-step energy balance of the pressure solve (test function = new pressure).

    Returns (lhs, rhs, relative_error) where the relative error is scaled by
    the largest participating term; it vanishes up to the algebraic solver
    tolerance.
    """
    u0 = np.asarray(getattr(u_n, "values", u_n), dtype=np.float64)
    u1 = np.asarray(getattr(u_np1, "values", u_np1), dtype=np.float64)
    eps = params.epsilon
    dt = params.dt
    m = system.mass

    nsq = lambda v: float(np.dot(m * v, v))
    t1 = 0.5 * eps * eps * nsq(u1 - u0)
    t2 = 0.5 * eps * eps * (nsq(u1) - nsq(u0))
    t3 = dt * float(u1 @ (system.k_zeta @ u1))
    t4 = (dt / (eps * params.alpha)) * float(np.dot(m * system.delta_n * u1, u1))
    lhs = t1 + t2 + t3 + t4
    r1 = dt * (params.Q / eps) * float(np.dot(m * system.delta_n, u1))
    r2 = dt * float(np.dot(m * system.zeta_n, u1))
    rhs = r1 - r2
    scale = max(abs(t1), abs(t2), abs(t3), abs(t4), abs(r1), abs(r2), 1e-30)
    return lhs, rhs, abs(lhs - rhs) / scale
