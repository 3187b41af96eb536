"""Per-exit distance fields.

A field holds, for every cell, the cheapest cost of walking to any cell of one
exit, where entering a cell costs its ``traversal_cost``. It is computed once
per exit with a multi-source Dijkstra over the 8-connected grid and shared by
all agents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .grid import MOORE_OFFSETS, ExitSpec, Grid
from .hazards import HazardParams, cost_array, heat_mask

UNREACHABLE = math.inf


@dataclass
class DistanceField:
    exit_id: int
    dist: np.ndarray
    stamp: int = 0
    costs: np.ndarray = field(default=None, repr=False)
    values: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.values is None:
            self.values = self.dist.ravel().tolist()

    @property
    def blocked(self) -> bool:
        """True when no cell can reach the exit."""
        return not np.isfinite(self.dist).any()


def _edge_index(height, width):
    """All (from, to) flat-index pairs of 8-connected moves inside the grid."""
    rows, cols = np.indices((height, width))
    src, dst = [], []
    for dr, dc in MOORE_OFFSETS:
        r2, c2 = rows + dr, cols + dc
        ok = (r2 >= 0) & (r2 < height) & (c2 >= 0) & (c2 < width)
        src.append((rows * width + cols)[ok])
        dst.append((r2 * width + c2)[ok])
    return np.concatenate(src), np.concatenate(dst)


_EDGE_CACHE: dict = {}


def _edges(grid):
    key = grid.shape
    if key not in _EDGE_CACHE:
        _EDGE_CACHE[key] = _edge_index(*key)
    return _EDGE_CACHE[key]


def _standable(grid):
    # Cells an agent may be standing on: walkable and not burning. Heat cells
    # qualify, so an agent caught by spreading heat still gets a way out.
    return (grid.walkable & (grid.fire == 0)).ravel()


def field_from_costs(grid: Grid, exit_spec: ExitSpec, costs: np.ndarray, stamp: int = 0) -> DistanceField:
    flat_cost = costs.ravel()
    src, dst = _edges(grid)
    # Reverse graph: a forward move u -> v costs cost[v]; search runs from the exit outwards.
    keep = np.isfinite(flat_cost[dst]) & _standable(grid)[src]
    n = grid.size
    graph = csr_matrix((flat_cost[dst][keep], (dst[keep], src[keep])), shape=(n, n))
    sources = [grid.flat(p) for p in exit_spec.cells if math.isfinite(flat_cost[grid.flat(p)])]
    if not sources:
        dist = np.full(grid.shape, UNREACHABLE)
    else:
        dist = dijkstra(graph, directed=True, indices=sources, min_only=True).reshape(grid.shape)
    return DistanceField(exit_spec.id, dist, stamp, costs)


def compute_field(grid: Grid, exit_spec: ExitSpec, hazards: HazardParams, stamp: int = 0) -> DistanceField:
    return field_from_costs(grid, exit_spec, cost_array(grid, hazards), stamp)


def pred_dist(field: DistanceField, pos) -> float:
    return float(field.dist[pos])


def descent_candidates(field: DistanceField, pos) -> list:
    """Enterable Moore neighbours strictly closer to the exit, nearest first.

    Equal distances keep neighbourhood order; the caller draws among them.
    """
    h, w = field.dist.shape
    r, c = pos
    here = field.dist[r, c]
    out = []
    for dr, dc in MOORE_OFFSETS:
        q = (r + dr, c + dc)
        if not (0 <= q[0] < h and 0 <= q[1] < w) or field.dist[q] >= here:
            continue
        if field.costs is None or math.isfinite(field.costs[q]):
            out.append(q)
    out.sort(key=lambda q: field.dist[q])  # stable sort keeps tie order
    return out


def refresh_fields(fields: dict, grid: Grid, tick: int, hazards: HazardParams, exits, heat=None) -> dict:
    """Recompute fields whose cost map changed since they were stamped."""
    if heat is None:
        heat = heat_mask(grid, hazards)
    costs = cost_array(grid, hazards, heat)
    by_id = {ex.id: ex for ex in exits}
    for exit_id, fld in list(fields.items()):
        if fld.costs is not None and np.array_equal(fld.costs, costs):
            continue
        fields[exit_id] = field_from_costs(grid, by_id[exit_id], costs, stamp=tick)
    return fields


def compute_fields(grid: Grid, exits, hazards: HazardParams, stamp: int = 0) -> dict:
    costs = cost_array(grid, hazards)
    return {ex.id: field_from_costs(grid, ex, costs, stamp) for ex in exits}


def format_field(field: DistanceField) -> str:
    """Text matrix dump, one grid row per line, unreachable cells as ``inf``."""
    lines = []
    for row in field.dist:
        lines.append(" ".join("inf" if not math.isfinite(v) else f"{v:g}" for v in row))
    return "\n".join(lines) + "\n"
