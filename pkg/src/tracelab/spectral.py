"""Eigendecomposition, multiplicity clustering, and spectral calculus.

The decomposition diagonalizes the symmetrized form of an
:class:`~tracelab.operators.OperatorMatrix`; eigenvectors are returned as
nodal fields orthonormal in the grid's trapezoidal L2 inner product.
Near-equal eigenvalues (exact grid symmetries or near-degeneracies) are
grouped into clusters, and every downstream consumer works with cluster
projections only, so results do not depend on the arbitrary basis inside a
cluster. Functions of the operator (heat semigroup, cosh of the square
root, ...) act mode-wise through the decomposition.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from ._kernels import backend_name, jacobi_eigh
from .grids import _fmt
from .operators import OperatorMatrix

OVERFLOW_CAP = 1e300
DEFAULT_CLUSTER_TOL_REL = 1e-6


class EigensolverError(RuntimeError):
    """Jacobi sweeps hit the iteration cap; carries the worst off-diagonal."""

    def __init__(self, sweeps: int, off: float):
        super().__init__(
            f"Jacobi failed to converge after {sweeps} sweeps "
            f"(off-diagonal Frobenius norm {off:.3e})"
        )
        self.sweeps = sweeps
        self.off = off


class SpectralOverflowError(RuntimeError):
    """A spectral function exceeded the per-mode overflow cap."""

    def __init__(self, cluster: int, eigenvalue: float, magnitude: float,
                 tau_max: float | None = None):
        msg = (f"spectral function overflows on cluster {cluster} "
               f"(eigenvalue {eigenvalue:.6g}, magnitude {magnitude:.3e})")
        if tau_max is not None:
            msg += f"; maximal admissible time {tau_max:.6g}"
        super().__init__(msg)
        self.cluster = cluster
        self.eigenvalue = eigenvalue
        self.magnitude = magnitude
        self.tau_max = tau_max


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues, L2-orthonormal eigenvectors, and clusters.

    ``clusters`` is a list of (representative eigenvalue, member indices);
    representatives are within-cluster means and strictly increase.
    """

    operator: OperatorMatrix
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]  # columns, unit trapezoid-L2 norm
    clusters: tuple[tuple[float, tuple[int, ...]], ...]
    cluster_tol: float

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def cluster_eigenvalues(self) -> NDArray[np.float64]:
        return np.array([rep for rep, _ in self.clusters])

    def multiplicities(self) -> NDArray[np.int64]:
        return np.array([len(m) for _, m in self.clusters], dtype=np.int64)

    def coefficients(self, a: NDArray) -> NDArray[np.float64]:
        """Trapezoid-L2 coefficients of ``a`` against every eigenvector."""
        w = self.operator.grid.quad_weights()
        return self.eigenvectors.T @ (w * np.asarray(a, dtype=float))


def _cluster(eigenvalues: NDArray, tol: float) -> tuple[tuple[float, tuple[int, ...]], ...]:
    clusters = []
    members = [0]
    for j in range(1, len(eigenvalues)):
        if eigenvalues[j] - eigenvalues[members[0]] <= tol:
            members.append(j)
        else:
            clusters.append(members)
            members = [j]
    clusters.append(members)
    return tuple(
        (float(np.mean(eigenvalues[m])), tuple(int(i) for i in m)) for m in clusters
    )


def eigendecompose(op: OperatorMatrix, cluster_tol: float | None = None,
                   tol: float = 1e-14, max_sweeps: int = 60) -> SpectralDecomposition:
    """Full decomposition of the operator via cyclic Jacobi rotations.

    Raises :class:`EigensolverError` when the sweep cap is hit before the
    off-diagonal norm target. The backend (compiled or NumPy) is chosen at
    import; see ``tracelab._kernels.backend_name``.
    """
    s = op.symmetrized_dense()
    diag, rot, sweeps, off = jacobi_eigh(s, tol=tol, max_sweeps=max_sweeps)
    fro = float(np.linalg.norm(s))
    if off > 1e-10 * max(1.0, fro):
        raise EigensolverError(sweeps, off)
    order = np.argsort(diag, kind="stable")
    eigenvalues = np.asarray(diag, dtype=float)[order]
    # back to nodal fields, then normalize in the quadrature inner product
    vectors = op.from_basis(rot[:, order].T).T
    w = op.grid.quad_weights()
    norms = np.sqrt(np.sum(w[:, None] * vectors**2, axis=0))
    vectors = vectors / norms
    if cluster_tol is None:
        cluster_tol = DEFAULT_CLUSTER_TOL_REL * max(1.0, float(np.abs(eigenvalues).max()))
    return SpectralDecomposition(
        operator=op,
        eigenvalues=eigenvalues,
        eigenvectors=vectors,
        clusters=_cluster(eigenvalues, float(cluster_tol)),
        cluster_tol=float(cluster_tol),
    )


def project(dec: SpectralDecomposition, k: int, a: NDArray) -> NDArray[np.float64]:
    """Orthogonal projection of ``a`` onto the k-th eigenvalue cluster."""
    if not 0 <= k < dec.num_clusters:
        raise IndexError(f"cluster index {k} out of range [0, {dec.num_clusters})")
    _, members = dec.clusters[k]
    idx = list(members)
    coef = dec.coefficients(a)[idx]
    return dec.eigenvectors[:, idx] @ coef


def mode_norms(dec: SpectralDecomposition, a: NDArray) -> NDArray[np.float64]:
    """Squared cluster-projection norms; sums to ||a||^2 (discrete Parseval)."""
    coef = dec.coefficients(a)
    return np.array([
        float(np.sum(coef[list(members)] ** 2)) for _, members in dec.clusters
    ])


def spectral_apply(dec: SpectralDecomposition, f: Callable[[float], float],
                   a: NDArray) -> NDArray[np.float64]:
    """Apply ``f`` of the operator to ``a`` mode by mode.

    Guards against overflow: if ``|f(lambda_k)| * ||P_k a||`` exceeds 1e300
    for some cluster, the offending mode is reported via
    :class:`SpectralOverflowError` instead of returning infinities.
    """
    coef = dec.coefficients(a)
    out_coef = np.zeros_like(coef)
    for ci, (rep, members) in enumerate(dec.clusters):
        idx = list(members)
        block = coef[idx]
        block_norm = float(np.sqrt(np.sum(block**2)))
        with np.errstate(over="ignore"):
            val = float(f(rep))
        if not np.isfinite(val) or abs(val) * block_norm > OVERFLOW_CAP:
            mag = abs(val) * block_norm if np.isfinite(val) else np.inf
            raise SpectralOverflowError(ci, rep, mag)
        out_coef[idx] = val * block
    return dec.eigenvectors @ out_coef


def heat_apply(dec: SpectralDecomposition, t: float, a: NDArray) -> NDArray[np.float64]:
    return spectral_apply(dec, lambda lam: np.exp(-lam * t), a)


def cosh_sqrt_apply(dec: SpectralDecomposition, t: float, a: NDArray) -> NDArray[np.float64]:
    """cosh(t sqrt(A)) a; reports the admissible time horizon on overflow."""
    try:
        return spectral_apply(dec, lambda lam: np.cosh(t * np.sqrt(max(lam, 0.0))), a)
    except SpectralOverflowError as err:
        raise SpectralOverflowError(
            err.cluster, err.eigenvalue, err.magnitude,
            tau_max=admissible_tau(dec, a),
        ) from None


def admissible_tau(dec: SpectralDecomposition, a: NDArray) -> float:
    """Largest t with cosh(t sqrt(lambda_k)) ||P_k a|| under the cap, all k."""
    coef = dec.coefficients(a)
    tau = np.inf
    log_cap = np.log(OVERFLOW_CAP)
    for rep, members in dec.clusters:
        block_norm = float(np.sqrt(np.sum(coef[list(members)] ** 2)))
        if block_norm == 0.0 or rep <= 0.0:
            continue
        # cosh(x) <= e^x, so x <= log(cap / norm) is admissible
        tau = min(tau, (log_cap - np.log(block_norm)) / np.sqrt(rep))
    return float(tau)


def decomposition_to_csv(dec: SpectralDecomposition) -> str:
    """Eigenvalue and cluster table (index, eigenvalue, cluster, representative)."""
    buf = io.StringIO()
    buf.write("index,eigenvalue,cluster,representative,multiplicity\n")
    for ci, (rep, members) in enumerate(dec.clusters):
        for j in members:
            buf.write(",".join([
                str(j), _fmt(dec.eigenvalues[j]), str(ci), _fmt(rep), str(len(members)),
            ]) + "\n")
    return buf.getvalue()


def eigenvector_csv(dec: SpectralDecomposition, indices: Sequence[int]) -> str:
    """On-demand eigenvector export, one column per requested index."""
    buf = io.StringIO()
    buf.write("node," + ",".join(f"v{int(j)}" for j in indices) + "\n")
    for row in range(dec.eigenvectors.shape[0]):
        vals = [_fmt(dec.eigenvectors[row, int(j)]) for j in indices]
        buf.write(f"{row}," + ",".join(vals) + "\n")
    return buf.getvalue()


__all__ = [
    "SpectralDecomposition", "EigensolverError", "SpectralOverflowError",
    "eigendecompose", "project", "mode_norms", "spectral_apply",
    "heat_apply", "cosh_sqrt_apply", "admissible_tau",
    "decomposition_to_csv", "eigenvector_csv", "backend_name",
]
