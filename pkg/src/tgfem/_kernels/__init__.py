"""Sweep-kernel backend selection.

The compiled Cython kernel is preferred; the pure-Python twin is used when
the extension was not built or when ``TGFEM_PURE_PYTHON=1`` is set.  Both
implement the same update in the same order, so results are identical.
"""

import os

if os.environ.get("TGFEM_PURE_PYTHON") == "1":
    from tgfem._kernels.sor_py import psor_sweeps
    BACKEND = "python"
else:
    try:
        from tgfem._kernels._sor import psor_sweeps
        BACKEND = "cython"
    except ImportError:
        from tgfem._kernels.sor_py import psor_sweeps
        BACKEND = "python"

__all__ = ["psor_sweeps", "BACKEND"]
