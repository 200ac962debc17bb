"""Discrete self-adjoint Neumann operators.

The continuum operator is ``u -> -div(a grad u) - c u + M u`` with a
vanishing conormal derivative on the boundary. Discretely we store the
trapezoid-weighted form matrix

    K = W_rel * L,

assembled edge by edge from midpoint diffusion coefficients, where ``L`` is
the mirror-closure (ghost-node reflection) finite-difference operator and
``W_rel`` the relative trapezoid weight pattern. K is exactly symmetric
(each edge contributes the same float to (i,j) and (j,i), and the pure
divergence diagonal is the negated off-diagonal row sum, so K @ 1 == 0
bit-exactly). The operator *action* is ``W_rel^{-1} K``, whose rows are the
documented mirror stencil; spectral work happens on the similarity transform
``D^{-1} K D^{-1}`` with ``D = sqrt(W_rel)``, which shares the action's
spectrum and is symmetric bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .grids import Grid, validate_diffusion, validate_field

COERCIVITY_MARGIN = 1e-6


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse symmetric form of ``A - c + M I`` with Neumann mirror closure."""

    grid: Grid
    form: sp.csr_matrix          # W_rel * action, exactly symmetric
    offdiag: sp.csr_matrix       # off-diagonal part of the divergence block
    diag_pure: NDArray[np.float64]
    rel_weights: NDArray[np.float64]
    shift: float
    diffusion: NDArray[np.float64]
    zeroth: NDArray[np.float64]  # the c field (before sign flip)

    @property
    def num_nodes(self) -> int:
        return self.grid.num_nodes

    def apply(self, u: NDArray) -> NDArray[np.float64]:
        """Mirror-stencil action ``(A - c + M) u``.

        Evaluated as divergence part plus pointwise zeroth-order term, in the
        summation order that annihilates constant fields exactly.
        """
        u = validate_field(self.grid, u)
        pure = (self.offdiag @ u + self.diag_pure * u) / self.rel_weights
        return pure + (self.shift - self.zeroth) * u

    def symmetrized_dense(self) -> NDArray[np.float64]:
        """Dense ``D^{-1} K D^{-1}``; symmetric, spectrum of the action."""
        d = np.sqrt(self.rel_weights)
        k = self.form.toarray()
        return k / np.outer(d, d)

    def to_basis(self, u: NDArray) -> NDArray[np.float64]:
        """Nodal field -> symmetrized coordinates (multiply by sqrt weights)."""
        return np.sqrt(self.rel_weights) * u

    def from_basis(self, y: NDArray) -> NDArray[np.float64]:
        return y / np.sqrt(self.rel_weights)


def _edge_list(grid: Grid, diffusion: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Rows, cols, coefficients of the off-diagonal edge contributions."""
    shape = grid.counts
    rel = grid.relative_weights().reshape(shape)
    diff = diffusion.reshape(shape)
    idx = np.arange(grid.num_nodes).reshape(shape)
    rows, cols, vals = [], [], []
    for a in range(grid.dim):
        h2 = grid.spacing[a] ** 2
        lo = tuple(slice(None, -1) if ax == a else slice(None) for ax in range(grid.dim))
        hi = tuple(slice(1, None) if ax == a else slice(None) for ax in range(grid.dim))
        a_mid = 0.5 * (diff[lo] + diff[hi])
        # transverse trapezoid weight: relative weight with this axis factored out
        w_axis = np.ones(shape[a])
        w_axis[0] = w_axis[-1] = 0.5
        if grid.dim == 1:
            w_perp = np.ones_like(a_mid)
        else:
            other = 1 - a
            w_other = np.ones(shape[other])
            w_other[0] = w_other[-1] = 0.5
            w_perp = (np.ones(shape[a] - 1)[:, None] * w_other[None, :]
                      if a == 0 else w_other[:, None] * np.ones(shape[a] - 1)[None, :])
        coeff = (a_mid * w_perp / h2).ravel()
        rows.append(idx[lo].ravel())
        cols.append(idx[hi].ravel())
        vals.append(coeff)
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def assemble_operator(grid: Grid, diffusion: NDArray, c: NDArray,
                      shift: float = 0.0, ellipticity_floor: float = 1e-12) -> OperatorMatrix:
    """Assemble the weighted form of ``A - c + shift`` on the grid.

    The pure divergence part has exactly vanishing row sums (the Neumann
    kernel contains constants); the zeroth-order and shift terms add
    ``w_rel * (shift - c)`` on the diagonal.
    """
    if shift < 0:
        raise ValueError("shift must be non-negative")
    diffusion = validate_diffusion(grid, diffusion, ellipticity_floor)
    c = validate_field(grid, c)
    n = grid.num_nodes
    rows, cols, vals = _edge_list(grid, diffusion)
    off = sp.coo_matrix((-vals, (rows, cols)), shape=(n, n))
    off = (off + off.T).tocsr()
    off.sort_indices()
    # negative row sums, accumulated exactly like the CSR matvec does
    diag_pure = -(off @ np.ones(n))
    rel = grid.relative_weights()
    diag = diag_pure + rel * (float(shift) - c)
    form = (off + sp.diags(diag)).tocsr()
    form.sort_indices()
    return OperatorMatrix(grid=grid, form=form, offdiag=off, diag_pure=diag_pure,
                          rel_weights=rel, shift=float(shift), diffusion=diffusion,
                          zeroth=c)


def min_eigenvalue(op: OperatorMatrix) -> float:
    """Smallest eigenvalue of the operator action (dense symmetric query)."""
    return float(np.linalg.eigvalsh(op.symmetrized_dense())[0])


def coercive_shift(op: OperatorMatrix) -> float:
    """Smallest shift M (1e-6 margin) making the spectrum sit above 1.

    The same M must be applied to both operators of a paired experiment, so
    callers take the max of the two individual shifts.
    """
    lam_min = min_eigenvalue(op)
    if lam_min > 1.0 + COERCIVITY_MARGIN:
        return 0.0
    return 1.0 - lam_min + COERCIVITY_MARGIN


def with_shift(op: OperatorMatrix, shift: float) -> OperatorMatrix:
    """Rebuild the operator with a different uniform shift."""
    return assemble_operator(op.grid, op.diffusion, op.zeroth, shift=shift)
