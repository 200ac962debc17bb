# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled cyclic Jacobi eigensolver (hot kernel).

Same contract as the NumPy fallback in ``_jacobi_np``: two-sided rotations
with the Golub-Van Loan angle, full-matrix updates preserving symmetry.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef double _SKIP_REL = 0.5e-15


cdef double _off_norm(double[:, ::1] a, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(n):
            if i != j:
                acc += a[i, j] * a[i, j]
    return sqrt(acc)


def jacobi_eigh(matrix, double tol=1e-14, int max_sweeps=60):
    """Diagonalize a symmetric matrix; see ``_jacobi_np.jacobi_eigh``."""
    a_arr = np.array(matrix, dtype=np.float64, order="C")
    cdef Py_ssize_t n = a_arr.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr
    cdef double fro = float(np.linalg.norm(a_arr))
    cdef double target = tol * (fro if fro > 1.0 else 1.0)
    cdef double off, apq, app, aqq, tau, t, c, s, xp, xq
    cdef Py_ssize_t p, q, k
    cdef int sweeps = 0
    cdef bint rotated

    with nogil:
        off = _off_norm(a, n)
        while off > target and sweeps < max_sweeps:
            sweeps += 1
            rotated = False
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    app = a[p, p]
                    aqq = a[q, q]
                    if fabs(apq) <= _SKIP_REL * (fabs(app) + fabs(aqq)):
                        a[p, q] = 0.0
                        a[q, p] = 0.0
                        continue
                    tau = (aqq - app) / (2.0 * apq)
                    if tau != 0.0:
                        t = (1.0 if tau > 0.0 else -1.0) / (fabs(tau) + sqrt(1.0 + tau * tau))
                    else:
                        t = 1.0
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        xp = a[p, k]
                        xq = a[q, k]
                        a[p, k] = c * xp - s * xq
                        a[q, k] = s * xp + c * xq
                    for k in range(n):
                        xp = a[k, p]
                        xq = a[k, q]
                        a[k, p] = c * xp - s * xq
                        a[k, q] = s * xp + c * xq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for k in range(n):
                        xp = v[k, p]
                        xq = v[k, q]
                        v[k, p] = c * xp - s * xq
                        v[k, q] = s * xp + c * xq
                    rotated = True
            off = _off_norm(a, n)
            if not rotated:
                break

    return np.diagonal(a_arr).copy(), v_arr, sweeps, off
