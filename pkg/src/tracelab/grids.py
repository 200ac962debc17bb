"""Tensor-product grids, nodal fields, and boundary selections.

Everything downstream lives on a rectangular grid with nodes at the tensor
product of uniformly spaced 1D coordinates (boundary nodes included). Fields
are flat float arrays in C order (axis 0 slowest). L2 norms and inner
products use trapezoidal quadrature weights; that choice is load-bearing:
it is the inner product in which the mirror-closed Neumann operator of
:mod:`tracelab.operators` is self-adjoint.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

FACE_NAMES = {
    1: ("xlo", "xhi"),
    2: ("xlo", "xhi", "ylo", "yhi"),
}

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid on a 1D interval or 2D rectangle.

    ``boundary_faces`` maps each boundary node to exactly one face label;
    corners are resolved by the lowest-axis-wins convention (a corner of a
    2D grid is labeled ``xlo``/``xhi``, never ``ylo``/``yhi``).
    """

    dim: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.extents) != self.dim or len(self.counts) != self.dim:
            raise ValueError("extents/counts length must equal dim")
        if any(c < 3 for c in self.counts):
            raise ValueError(f"counts must be >= 3 per axis, got {self.counts}")
        if any(e <= 0 for e in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")
        object.__setattr__(
            self,
            "spacing",
            tuple(e / (c - 1) for e, c in zip(self.extents, self.counts)),
        )

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    def axis_coords(self, axis: int) -> NDArray[np.float64]:
        return np.linspace(0.0, self.extents[axis], self.counts[axis])

    def coords(self) -> NDArray[np.float64]:
        """All node coordinates, shape (num_nodes, dim), C-ordered."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def flat_index(self, multi: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(multi, self.counts))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.counts))

    def interior_mask(self) -> NDArray[np.bool_]:
        """Boolean per node, True away from every boundary face."""
        mask = np.ones(self.counts, dtype=bool)
        for a in range(self.dim):
            sl_lo = [slice(None)] * self.dim
            sl_hi = [slice(None)] * self.dim
            sl_lo[a] = 0
            sl_hi[a] = -1
            mask[tuple(sl_lo)] = False
            mask[tuple(sl_hi)] = False
        return mask.ravel()

    def boundary_faces(self) -> dict[int, str]:
        """Face label per boundary node, lowest axis winning at corners."""
        labels: dict[int, str] = {}
        names = FACE_NAMES[self.dim]
        # highest axis first so that lower axes overwrite at corners
        for a in reversed(range(self.dim)):
            for side, idx in ((0, 0), (1, self.counts[a] - 1)):
                sel = [slice(None)] * self.dim
                sel[a] = idx
                nodes = np.arange(self.num_nodes).reshape(self.counts)[tuple(sel)]
                for n in np.atleast_1d(nodes).ravel():
                    labels[int(n)] = names[2 * a + side]
        return labels

    def face_nodes(self, face: str) -> NDArray[np.int64]:
        """All nodes lying on a geometric face (corners included)."""
        names = FACE_NAMES[self.dim]
        if face not in names:
            raise ValueError(f"unknown face {face!r} for dim {self.dim}")
        a, side = divmod(names.index(face), 2)
        sel = [slice(None)] * self.dim
        sel[a] = self.counts[a] - 1 if side else 0
        nodes = np.arange(self.num_nodes).reshape(self.counts)[tuple(sel)]
        return np.atleast_1d(nodes).ravel().astype(np.int64)

    def face_neighbors(self, node: int) -> list[int]:
        multi = self.multi_index(node)
        out = []
        for a in range(self.dim):
            for step in (-1, 1):
                j = multi[a] + step
                if 0 <= j < self.counts[a]:
                    m = list(multi)
                    m[a] = j
                    out.append(self.flat_index(tuple(m)))
        return out

    def relative_weights(self) -> NDArray[np.float64]:
        """Trapezoid weight pattern (1/2 on faces, 1/4 at 2D corners)."""
        w = np.ones(1)
        for a in range(self.dim):
            wa = np.ones(self.counts[a])
            wa[0] = wa[-1] = 0.5
            w = np.multiply.outer(w, wa)
        return w.ravel()

    def quad_weights(self) -> NDArray[np.float64]:
        """Absolute L2 quadrature weights: prod(h) times the trapezoid pattern."""
        return float(np.prod(self.spacing)) * self.relative_weights()

    def inner(self, u: NDArray, v: NDArray) -> float:
        return float(np.sum(self.quad_weights() * u * v))

    def norm(self, u: NDArray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def build_grid(dim: int, extents, counts) -> Grid:
    """Construct a grid, validating counts >= 3 and positive extents."""
    return Grid(dim=int(dim), extents=tuple(float(e) for e in extents),
                counts=tuple(int(c) for c in counts))


def face_of_nodes(grid: Grid, nodes) -> tuple[str, int, int]:
    """The face containing every given boundary node, as (name, axis, side).

    Corners belong to two geometric faces, so membership is tested against
    the full face slices, not the corner-priority labels.
    """
    node_set = set(int(n) for n in nodes)
    for face in FACE_NAMES[grid.dim]:
        if node_set <= set(int(n) for n in grid.face_nodes(face)):
            axis, side = divmod(FACE_NAMES[grid.dim].index(face), 2)
            return face, axis, side
    raise ValueError("nodes do not lie on a single face")


def constant_field(grid: Grid, value: float) -> NDArray[np.float64]:
    return np.full(grid.num_nodes, float(value))


def validate_field(grid: Grid, values: NDArray) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != grid.num_nodes:
        raise ValueError(f"field has {arr.size} values, grid has {grid.num_nodes} nodes")
    return arr


def validate_diffusion(grid: Grid, values: NDArray, floor: float) -> NDArray[np.float64]:
    """Isotropic diffusion coefficient with an ellipticity floor scan."""
    arr = validate_field(grid, values)
    if floor <= 0:
        raise ValueError("ellipticity floor must be positive")
    low = float(arr.min())
    if low < floor:
        raise ValueError(f"diffusion violates ellipticity floor: min {low} < {floor}")
    return arr


@dataclass(frozen=True)
class BoundaryMask:
    """A face-connected selection of boundary nodes (the observation set)."""

    grid: Grid
    nodes: tuple[int, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("boundary selection is empty")
        labels = self.grid.boundary_faces()
        bad = [n for n in self.nodes if n not in labels]
        if bad:
            raise ValueError(f"nodes {bad} are not boundary nodes")
        if not _boundary_connected(self.grid, set(self.nodes)):
            raise ValueError("boundary selection is not face-connected")

    def as_array(self) -> NDArray[np.int64]:
        return np.asarray(self.nodes, dtype=np.int64)


def _boundary_connected(grid: Grid, nodes: set[int]) -> bool:
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m in grid.face_neighbors(n):
            if m in nodes and m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(nodes)


def build_boundary_mask(grid: Grid, faces, index_range=None) -> BoundaryMask:
    """Select observation nodes on one or more faces.

    ``faces`` is a face name or list of names; ``index_range`` restricts a
    single-face selection to tangential indices [lo, hi] inclusive (2D) or is
    ignored in 1D. Disconnected requests (e.g. two opposite faces) are
    rejected.
    """
    if isinstance(faces, str):
        faces = [faces]
    nodes: list[int] = []
    for f in faces:
        fn = grid.face_nodes(f)
        if index_range is not None and grid.dim == 2 and len(faces) == 1:
            lo, hi = index_range
            fn = fn[int(lo):int(hi) + 1]
        nodes.extend(int(n) for n in fn)
    return BoundaryMask(grid=grid, nodes=tuple(sorted(set(nodes))))


def field_to_csv(grid: Grid, values: NDArray, header: str = "value") -> str:
    """Serialize a nodal field: per-axis coordinates then the value, %.17g."""
    values = validate_field(grid, values)
    coords = grid.coords()
    buf = io.StringIO()
    cols = [f"x{a}" for a in range(grid.dim)] + [header]
    buf.write(",".join(cols) + "\n")
    for i in range(grid.num_nodes):
        row = [_fmt(c) for c in coords[i]] + [_fmt(values[i])]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
