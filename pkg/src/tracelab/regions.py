"""Support regions, active boundary parts, and reachable subdomains.

The initial value's support region consists of the interior nodes where it
is nonzero (above a threshold); its active boundary part consists of the
observation nodes where it is nonzero. The reachable region is the set of
support nodes connected to the active boundary by face-adjacent grid paths
staying inside the support: grid paths stand in for the smooth curves of
the continuum definition, and face adjacency (never diagonal) keeps the
approximation conservative around pinch points. A thin tube from a target
point back to the active boundary is carved out of the reachable region for
the local Carleman machinery.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .grids import BoundaryMask, Grid, validate_field

DEFAULT_THRESHOLD_REL = 1e-12
TUBE_HALF_WIDTH = 2  # grid cells


class EmptyActiveBoundaryError(ValueError):
    """The initial value vanishes on the whole observation boundary."""


@dataclass(frozen=True)
class RegionMask:
    """Boolean node mask with a provenance tag.

    Tags: "support" (interior positivity set), "active_boundary"
    (observation nodes with nonzero data), "reachable", "tube", "custom".
    """

    grid: Grid
    mask: NDArray[np.bool_]
    tag: str = "custom"
    path: tuple[int, ...] = ()  # tube spine, Γ-contact first (tube masks only)

    def __post_init__(self):
        if self.mask.shape != (self.grid.num_nodes,):
            raise ValueError("mask length must equal the node count")

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def nodes(self) -> NDArray[np.int64]:
        return np.nonzero(self.mask)[0].astype(np.int64)


def default_threshold(values: NDArray) -> float:
    """Global positivity tolerance: 1e-12 times the field's max magnitude."""
    peak = float(np.abs(values).max()) if np.asarray(values).size else 0.0
    return DEFAULT_THRESHOLD_REL * peak


def support_region(initial: NDArray, grid: Grid,
                   threshold: float | None = None) -> RegionMask:
    """Interior nodes where the initial value exceeds the threshold."""
    initial = validate_field(grid, initial)
    if threshold is None:
        threshold = default_threshold(initial)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    mask = (np.abs(initial) > threshold) & grid.interior_mask()
    return RegionMask(grid=grid, mask=mask, tag="support")


def active_boundary(initial: NDArray, observation: BoundaryMask,
                    threshold: float | None = None) -> RegionMask:
    """Observation nodes where the initial value is nonzero.

    An empty result is a hard error: the downstream reachable region is
    undefined without boundary contact of the initial value.
    """
    initial = validate_field(observation.grid, initial)
    if threshold is None:
        threshold = default_threshold(initial)
    mask = np.zeros(observation.grid.num_nodes, dtype=bool)
    idx = observation.as_array()
    mask[idx] = np.abs(initial[idx]) > threshold
    if not mask.any():
        raise EmptyActiveBoundaryError(
            "initial value vanishes on the observation boundary")
    return RegionMask(grid=observation.grid, mask=mask, tag="active_boundary")


def _flood(grid: Grid, allowed: NDArray[np.bool_], seeds) -> NDArray[np.bool_]:
    reached = np.zeros(grid.num_nodes, dtype=bool)
    queue = deque(int(s) for s in seeds if allowed[s])
    for s in queue:
        reached[s] = True
    while queue:
        n = queue.popleft()
        for m in grid.face_neighbors(n):
            if allowed[m] and not reached[m]:
                reached[m] = True
                queue.append(m)
    return reached


def reachable_region(support: RegionMask, active: RegionMask) -> RegionMask:
    """Flood fill of the support from the interior neighbors of the active
    boundary; the union of all reached components."""
    if not active.mask.any():
        raise ValueError("active boundary part is empty")
    grid = support.grid
    seeds = []
    for b in np.nonzero(active.mask)[0]:
        seeds.extend(m for m in grid.face_neighbors(int(b)) if support.mask[m])
    reached = _flood(grid, support.mask, seeds)
    return RegionMask(grid=grid, mask=reached, tag="reachable")


def wall_distance(grid: Grid, mask: NDArray[np.bool_]) -> NDArray[np.int64]:
    """BFS steps to outside the mask (1 on the mask's boundary ring)."""
    dist = np.full(grid.num_nodes, 0, dtype=np.int64)
    queue = deque()
    for n in np.nonzero(mask)[0]:
        if any(not mask[m] for m in grid.face_neighbors(int(n))):
            dist[n] = 1
            queue.append(int(n))
    while queue:
        n = queue.popleft()
        for m in grid.face_neighbors(n):
            if mask[m] and dist[m] == 0:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def _shortest_path(grid: Grid, allowed: NDArray[np.bool_], start: int,
                   targets: set[int]) -> list[int] | None:
    """Breadth-first shortest face-path inside ``allowed`` from start to any
    target, deterministic (neighbors visited in index order)."""
    prev = {start: None}
    queue = deque([start])
    found = None
    while queue:
        n = queue.popleft()
        if n in targets:
            found = n
            break
        for m in sorted(grid.face_neighbors(n)):
            if allowed[m] and m not in prev:
                prev[m] = n
                queue.append(m)
    if found is None:
        return None
    path = [found]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def carve_tube(reachable: RegionMask, active: RegionMask,
               target: int) -> RegionMask:
    """Thin tube inside the reachable region joining a target node to the
    active boundary.

    The tube is the set of reachable nodes within Chebyshev distance
    ``TUBE_HALF_WIDTH`` of a shortest grid path from the active boundary
    to the target; the path (contact end first) is retained for the weight
    construction.
    """
    grid = reachable.grid
    if not reachable.mask[target]:
        raise ValueError(f"target node {target} is not in the reachable region")
    contact = set()
    for b in np.nonzero(active.mask)[0]:
        contact.update(m for m in grid.face_neighbors(int(b)) if reachable.mask[m])
    path = _shortest_path(grid, reachable.mask, target, contact)
    if path is None:
        raise ValueError("no path from the target to the active boundary")
    path = path[::-1]  # contact end first
    mask = np.zeros(grid.num_nodes, dtype=bool)
    multis = np.array([grid.multi_index(n) for n in np.nonzero(reachable.mask)[0]])
    nodes = np.nonzero(reachable.mask)[0]
    path_multis = np.array([grid.multi_index(p) for p in path])
    for node, multi in zip(nodes, multis):
        cheb = np.abs(path_multis - multi).max(axis=1).min()
        if cheb <= TUBE_HALF_WIDTH:
            mask[node] = True
    # round off corners: ring nodes with no interior neighbor stand for
    # sub-grid geometry the mask cannot resolve (the continuum tube has a
    # smooth boundary); the spine is never dropped
    protected = set(int(p) for p in path)
    while True:
        wall = wall_distance(grid, mask)
        drop = [
            int(n) for n in np.nonzero(mask)[0]
            if wall[n] == 1 and int(n) not in protected
            and all(wall[m] == 1 for m in grid.face_neighbors(int(n)) if mask[m])
        ]
        if not drop:
            break
        mask[drop] = False
    return RegionMask(grid=grid, mask=mask, tag="tube",
                      path=tuple(int(p) for p in path))


def tube_conditions(tube: RegionMask, active: RegionMask, initial: NDArray,
                    threshold: float | None = None) -> dict[str, bool]:
    """Grid-level checks of the tube contract: non-empty, touches the active
    boundary, initial value nonzero on its closure."""
    grid = tube.grid
    initial = validate_field(grid, initial)
    if threshold is None:
        threshold = default_threshold(initial)
    tube_nodes = tube.nodes()
    touches = any(
        active.mask[m] for n in tube_nodes for m in grid.face_neighbors(int(n))
    )
    closure = set(int(n) for n in tube_nodes)
    for n in tube_nodes:
        closure.update(grid.face_neighbors(int(n)))
    positive = all(abs(initial[n]) > threshold for n in closure)
    return {
        "nonempty": tube.count > 0,
        "touches_active_boundary": touches,
        "positive_on_closure": positive,
    }


def region_to_ascii(region: RegionMask) -> str:
    """2D mask as rows of '#' (in) and '.' (out); 1D as a single row."""
    grid = region.grid
    if grid.dim == 1:
        return "".join("#" if v else "." for v in region.mask)
    rows = []
    m = region.mask.reshape(grid.counts)
    for j in reversed(range(grid.counts[1])):  # top row printed first
        rows.append("".join("#" if m[i, j] else "." for i in range(grid.counts[0])))
    return "\n".join(rows)


def region_to_csv(region: RegionMask) -> str:
    """Node list of the mask with coordinates."""
    coords = region.grid.coords()
    buf = io.StringIO()
    buf.write("node," + ",".join(f"x{a}" for a in range(region.grid.dim)) + "\n")
    for n in region.nodes():
        buf.write(str(int(n)) + "," + ",".join("%.17g" % c for c in coords[n]) + "\n")
    return buf.getvalue()


__all__ = [
    "RegionMask", "EmptyActiveBoundaryError", "support_region",
    "active_boundary", "reachable_region", "carve_tube", "tube_conditions",
    "region_to_ascii", "region_to_csv", "default_threshold",
    "TUBE_HALF_WIDTH",
]
