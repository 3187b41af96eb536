"""Smoke and fire spread on the cellular space.

Both elements follow the same synchronous rule: a cell that already holds the
element keeps it and its level climbs by one per tick up to ``max_level``; a
clean walkable cell with ``k`` affected Moore neighbours catches the element
with probability ``beta * k / 8``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import NO_AGENT, Cell, Grid, Structure

BLOCKED = math.inf

_MOORE_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int16)


@dataclass(frozen=True)
class HazardParams:
    beta_smoke: float = 1.0
    beta_fire: float = 0.4
    max_level: int = 5
    heat_radius: int = 1
    smoke_weight: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.beta_smoke <= 1.0:
            raise ValueError("beta_smoke must lie in [0, 1]")
        if not 0.0 <= self.beta_fire <= 1.0:
            raise ValueError("beta_fire must lie in [0, 1]")
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        if self.heat_radius < 0:
            raise ValueError("heat_radius must be >= 0")
        if self.smoke_weight < 1:
            raise ValueError("smoke_weight must be >= 1")


def moore_count(mask: np.ndarray) -> np.ndarray:
    """Number of True Moore neighbours of every cell (outside the grid counts as False)."""
    return ndimage.convolve(mask.astype(np.int16), _MOORE_KERNEL, mode="constant", cval=0)


def _spread(levels, eligible, beta, max_level, rng):
    has = levels > 0
    k = moore_count(has)
    # One draw per cell every tick keeps the generator stream independent of the hazard state.
    draws = rng.random(levels.shape)
    catches = ~has & eligible & (k > 0) & (draws < beta * k / 8.0)
    new = np.where(has, np.minimum(levels + 1, max_level), levels)
    new[catches] = 1
    return new, catches


def step_smoke(grid: Grid, params: HazardParams, rng: np.random.Generator) -> Grid:
    """Advance smoke one tick in place and return ``grid``."""
    grid.smoke, _ = _spread(grid.smoke, grid.walkable, params.beta_smoke, params.max_level, rng)
    return grid


def step_fire(grid: Grid, params: HazardParams, rng: np.random.Generator) -> Grid:
    """Advance fire one tick in place and return ``grid``.

    Only combustible, unoccupied walkable cells ignite. A cell that ignites
    also gets smoke at the same tick.
    """
    eligible = grid.walkable & grid.combustible & (grid.occupant == NO_AGENT)
    grid.fire, ignited = _spread(grid.fire, eligible, params.beta_fire, params.max_level, rng)
    grid.smoke[ignited] = np.maximum(grid.smoke[ignited], 1)
    return grid


def heat_mask(grid: Grid, params: HazardParams) -> np.ndarray:
    fire = grid.fire > 0
    if params.heat_radius > 0 and fire.any():
        size = 2 * params.heat_radius + 1
        zone = ndimage.binary_dilation(fire, structure=np.ones((size, size), dtype=bool))
    else:
        zone = fire.copy()
    zone &= ~grid.solid
    return zone


def heat_zone(grid: Grid, params: HazardParams) -> set:
    """Non-solid positions within ``heat_radius`` (Chebyshev) of a burning cell."""
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(heat_mask(grid, params)))}


def traversal_cost(cell: Cell, in_heat: bool, params: HazardParams) -> float:
    if cell.structure in (Structure.WALL, Structure.OBSTACLE):
        return BLOCKED
    if cell.fire_level > 0 or in_heat:
        return BLOCKED
    if cell.smoke_level > 0:
        return float(params.smoke_weight)
    return 1.0


def cost_array(grid: Grid, params: HazardParams, heat=None) -> np.ndarray:
    """``traversal_cost`` evaluated over the whole grid."""
    if heat is None:
        heat = heat_mask(grid, params)
    cost = np.ones(grid.shape, dtype=float)
    cost[grid.smoke > 0] = float(params.smoke_weight)
    cost[grid.solid | (grid.fire > 0) | heat] = BLOCKED
    return cost
