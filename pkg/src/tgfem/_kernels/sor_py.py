"""Pure-Python projected SOR sweeps, the fallback for the compiled kernel.

Kept arithmetic-for-arithmetic identical to ``_sor.pyx`` so that switching
backends never changes results, only speed.
"""


def psor_sweeps(indptr, indices, data, diag, rhs, x, order,
                lo, hi, omega, tol, max_sweeps):
    """Relax ``x`` in place; returns (sweeps_done, last_delta, converged)."""
    ip = indptr.tolist()
    col = indices.tolist()
    val = data.tolist()
    dia = diag.tolist()
    b = rhs.tolist()
    xs = x.tolist()
    ordr = order.tolist()
    n = len(xs)

    delta = 0.0
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        delta = 0.0
        for idx in range(n):
            j = ordr[idx]
            s = 0.0
            for k in range(ip[j], ip[j + 1]):
                s += val[k] * xs[col[k]]
            xnew = xs[j] + omega * (b[j] - s) / dia[j]
            if xnew < lo:
                xnew = lo
            elif xnew > hi:
                xnew = hi
            d = abs(xnew - xs[j])
            if d > delta:
                delta = d
            xs[j] = xnew
        sweeps = sweep + 1
        if delta <= tol:
            converged = True
            break

    x[:] = xs
    return sweeps, delta, converged
