"""NumPy-vectorized cyclic Jacobi eigensolver (fallback backend).

One rotation zeroes entry (p, q) via the two-sided update A <- J^T A J with
the Golub-Van Loan angle choice; rows and columns are updated with full-row
vector operations, keeping the matrix bit-for-bit symmetric throughout.
"""

from __future__ import annotations

import numpy as np

_SKIP_REL = 0.5e-15  # entries this small relative to their diagonal are zeroed


def _off_norm(a: np.ndarray) -> float:
    n = a.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return float(np.sqrt(np.sum(a[mask] ** 2)))


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Diagonalize a symmetric matrix by cyclic Jacobi sweeps.

    Returns ``(diag, v, sweeps, off)`` with unsorted eigenvalue estimates on
    ``diag``, accumulated rotations in the columns of ``v``, the number of
    sweeps performed, and the final off-diagonal Frobenius norm. Convergence
    means ``off <= tol * max(1, fro(matrix))``; the caller decides whether a
    non-converged ``off`` is acceptable.
    """
    a = np.array(matrix, dtype=float, order="C")
    n = a.shape[0]
    v = np.eye(n)
    fro = float(np.linalg.norm(a))
    target = tol * max(1.0, fro)
    off = _off_norm(a)
    sweeps = 0
    while off > target and sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        for p in range(n - 1):
            row_p = a[p]
            for q in range(p + 1, n):
                apq = row_p[q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                if abs(apq) <= _SKIP_REL * (abs(app) + abs(aqq)):
                    a[p, q] = a[q, p] = 0.0
                    continue
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # rows, then columns: A <- J^T A J
                ap = a[p].copy()
                aq = a[q].copy()
                a[p] = c * ap - s * aq
                a[q] = s * ap + c * aq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
                rotated = True
        off = _off_norm(a)
        if not rotated:
            break
    return np.diagonal(a).copy(), v, sweeps, off
