"""Piecewise field constructors: constants, bumps, and axis-aligned blocks."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .grids import Grid


def constant(grid: Grid, value: float) -> NDArray[np.float64]:
    return np.full(grid.num_nodes, float(value))


def bump(grid: Grid, base: float, center, width: float,
         height: float) -> NDArray[np.float64]:
    """Gaussian bump of the given height and width on top of a base value."""
    coords = grid.coords()
    center = np.atleast_1d(np.asarray(center, dtype=float))
    r2 = np.sum(((coords - center[None, :]) / float(width)) ** 2, axis=1)
    return base + height * np.exp(-r2)


def blocks(grid: Grid, base: float, specs, closed: bool = True) -> NDArray[np.float64]:
    """Set axis-aligned boxes to given values over a base field.

    ``specs`` is an iterable of ``(lows, highs, value)``; nodes inside the
    box (closure when ``closed``, open box otherwise) take the value.
    """
    values = constant(grid, base)
    coords = grid.coords()
    for lows, highs, value in specs:
        lows = np.atleast_1d(np.asarray(lows, dtype=float))
        highs = np.atleast_1d(np.asarray(highs, dtype=float))
        if closed:
            inside = np.all((coords >= lows) & (coords <= highs), axis=1)
        else:
            inside = np.all((coords > lows) & (coords < highs), axis=1)
        values[inside] = float(value)
    return values


def annulus(grid: Grid, inner_lows, inner_highs, outer_lows,
            outer_highs, value: float = 1.0) -> NDArray[np.float64]:
    """Field positive strictly inside the inner box and strictly outside the
    outer box, zero on the closed shell between them."""
    coords = grid.coords()
    inner_lows = np.atleast_1d(np.asarray(inner_lows, dtype=float))
    inner_highs = np.atleast_1d(np.asarray(inner_highs, dtype=float))
    outer_lows = np.atleast_1d(np.asarray(outer_lows, dtype=float))
    outer_highs = np.atleast_1d(np.asarray(outer_highs, dtype=float))
    in_inner = np.all((coords > inner_lows) & (coords < inner_highs), axis=1)
    in_outer = np.all((coords >= outer_lows) & (coords <= outer_highs), axis=1)
    values = np.where(in_inner | ~in_outer, float(value), 0.0)
    return values


__all__ = ["constant", "bump", "blocks", "annulus"]
