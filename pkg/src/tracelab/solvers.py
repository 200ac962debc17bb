"""Forward evolution problems and boundary-trace extraction.

Two independent routes solve the Neumann heat problem (they are mutual
oracles in the tests): a spectral solver summing ``exp(-lambda t)`` over
eigenvalue clusters, and a Crank-Nicolson stepper that never sees the
decomposition. The elliptic evolution ``cosh(t sqrt(A)) a`` shares the
spectral route and inherits its per-mode overflow guard, which turns the
qualitative "small enough time horizon" requirement into a computable
admissibility bound.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .grids import BoundaryMask, _fmt, validate_field
from .spectral import SpectralDecomposition, cosh_sqrt_apply


@dataclass(frozen=True)
class TraceSeries:
    """Boundary values on the observation nodes at strictly increasing times."""

    mask: BoundaryMask
    times: NDArray[np.float64]
    values: NDArray[np.float64]  # shape (num_times, num_observation_nodes)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(t <= 0):
            raise ValueError("trace times must be positive")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size, len(self.mask.nodes)):
            raise ValueError(
                f"values shape {v.shape} does not match "
                f"({t.size}, {len(self.mask.nodes)})"
            )

    @property
    def num_nodes(self) -> int:
        return len(self.mask.nodes)


@dataclass(frozen=True)
class EllipticEvolution:
    """Snapshots of cosh(t sqrt(A)) a on [0, tau]; starts at the initial value."""

    times: NDArray[np.float64]
    snapshots: NDArray[np.float64]  # (num_times, num_nodes)
    tau: float


def solve_parabolic_spectral(dec: SpectralDecomposition, a: NDArray,
                             times) -> NDArray[np.float64]:
    """Heat evolution by mode: rows are snapshots at the requested times."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("sample times must be positive")
    coef = dec.coefficients(a)
    lam = dec.eigenvalues
    # (num_times, num_modes) decay factors; all lambdas >= 0 after shift
    decay = np.exp(-np.outer(times, lam))
    return (decay * coef) @ dec.eigenvectors.T


def solve_parabolic_cn(op, a: NDArray, dt: float, horizon: float):
    """Crank-Nicolson stepping of the heat problem; independent of spectra.

    Steps the weighted symmetric system
    ``(W + dt/2 K) u_next = (W - dt/2 K) u`` with one sparse factorization.
    Returns ``(times, snapshots)`` at every step ``dt, 2 dt, ..., ~horizon``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = validate_field(op.grid, a)
    n_steps = int(round(horizon / dt))
    w = sp.diags(op.rel_weights).tocsc()
    k = op.form.tocsc()
    lhs = (w + (dt / 2.0) * k).tocsc()
    rhs = (w - (dt / 2.0) * k).tocsr()
    try:
        solver = spla.splu(lhs)
    except RuntimeError as err:
        raise RuntimeError(f"Crank-Nicolson linear solve failed: {err}") from err
    times = dt * np.arange(1, n_steps + 1)
    out = np.empty((n_steps, a.size))
    u = a.copy()
    for i in range(n_steps):
        u = solver.solve(rhs @ u)
        out[i] = u
    return times, out


def solve_elliptic_evolution(dec: SpectralDecomposition, a: NDArray,
                             times, tau: float) -> EllipticEvolution:
    """cosh(t sqrt(A)) a on [0, tau]; overflow reports the admissible tau."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > tau):
        raise ValueError("evolution times must lie in [0, tau]")
    snapshots = np.vstack([cosh_sqrt_apply(dec, float(t), a) for t in times])
    return EllipticEvolution(times=times, snapshots=snapshots, tau=float(tau))


def even_reflection(evolution: EllipticEvolution):
    """Extend snapshots evenly to negative times (the evolution is even in t)."""
    t = evolution.times
    keep = t > 0
    times = np.concatenate([-t[keep][::-1], t])
    snaps = np.vstack([evolution.snapshots[keep][::-1], evolution.snapshots])
    return times, snaps


def trace_on_gamma(snapshots: NDArray, mask: BoundaryMask, times) -> TraceSeries:
    """Restrict snapshots to the observation nodes; no interpolation."""
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 2 or snapshots.shape[1] != mask.grid.num_nodes:
        raise ValueError("snapshots do not match the mask's grid")
    idx = mask.as_array()
    return TraceSeries(mask=mask, times=np.asarray(times, dtype=float),
                       values=snapshots[:, idx])


def trace_to_csv(trace: TraceSeries) -> str:
    """One row per time, time first; header carries the node coordinates."""
    coords = trace.mask.grid.coords()[trace.mask.as_array()]
    labels = [":".join(_fmt(c) for c in row) for row in coords]
    buf = io.StringIO()
    buf.write("time," + ",".join(labels) + "\n")
    for i, t in enumerate(trace.times):
        buf.write(_fmt(t) + "," + ",".join(_fmt(v) for v in trace.values[i]) + "\n")
    return buf.getvalue()


__all__ = [
    "TraceSeries", "EllipticEvolution", "solve_parabolic_spectral",
    "solve_parabolic_cn", "solve_elliptic_evolution", "even_reflection",
    "trace_on_gamma", "trace_to_csv",
]
