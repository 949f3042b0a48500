# cython: boundscheck=False, wraparound=False, cdivision=True
"""Projected SOR sweeps over a CSR matrix (compiled hot loop).

Semantically identical to ``tgfem._kernels.sor_py``; the arithmetic is kept
in the same order so both backends produce bit-identical iterates.
"""

from libc.math cimport fabs


def psor_sweeps(int[::1] indptr, int[::1] indices, double[::1] data,
                double[::1] diag, double[::1] rhs, double[::1] x,
                int[::1] order, double lo, double hi,
                double omega, double tol, int max_sweeps):
    """Relax ``x`` in place; returns (sweeps_done, last_delta, converged).

    One sweep visits nodes in ``order`` and applies
    x_j <- clamp(x_j + omega * (rhs_j - (A x)_j) / diag_j, lo, hi).
    Convergence: the largest nodal update in a sweep is <= tol.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t idx, j, k, sweep
    cdef double s, xnew, d, delta

    delta = 0.0
    for sweep in range(max_sweeps):
        delta = 0.0
        for idx in range(n):
            j = order[idx]
            s = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                s += data[k] * x[indices[k]]
            xnew = x[j] + omega * (rhs[j] - s) / diag[j]
            if xnew < lo:
                xnew = lo
            elif xnew > hi:
                xnew = hi
            d = fabs(xnew - x[j])
            if d > delta:
                delta = d
            x[j] = xnew
        if delta <= tol:
            return sweep + 1, delta, True
    return max_sweeps, delta, False
