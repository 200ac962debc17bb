"""Backend selection for the cyclic Jacobi rotation kernel.

The compiled Cython kernel is preferred; a NumPy-vectorized fallback with
identical semantics is used when the extension was not built. Both return
``(diagonal, rotations, sweeps, off_norm)`` where ``rotations`` accumulates
the eigenvector columns.
"""

try:
    from ._jacobi_cy import jacobi_eigh as _jacobi_eigh

    BACKEND = "compiled"
except ImportError:
    from ._jacobi_np import jacobi_eigh as _jacobi_eigh

    BACKEND = "python"

from ._jacobi_np import jacobi_eigh as jacobi_eigh_python

jacobi_eigh = _jacobi_eigh


def backend_name() -> str:
    return BACKEND
