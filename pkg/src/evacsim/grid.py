"""Cellular space: the bounded grid, cell states and exits.

Positions are ``(row, col)`` tuples with row 0 at the top. Internally the
simulation works on flat indices ``row * width + col``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

CELL_SIDE = 0.4  # metres

# Moore offsets in row-major order. Every neighbourhood listing uses this order.
MOORE_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1),           (0, 1),
    (1, -1),  (1, 0),  (1, 1),
)

NO_AGENT = -1


class Structure(IntEnum):
    FLOOR = 0
    WALL = 1
    OBSTACLE = 2
    EXIT = 3


# Labels of the cell state set.
W, E, P, O, S, SF, PS = "W", "E", "P", "O", "S", "SF", "PS"
STATES = (W, E, P, O, S, SF, PS)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    structure: Structure
    smoke_level: int = 0
    fire_level: int = 0
    occupant: Optional[int] = None
    combustible: bool = False
    exit_id: Optional[int] = None

    def __post_init__(self):
        if self.structure in (Structure.WALL, Structure.OBSTACLE):
            if self.smoke_level or self.fire_level or self.occupant is not None:
                raise ValueError("wall/obstacle cells carry no smoke, fire or occupant")
        if self.fire_level > 0 and self.occupant is not None:
            raise ValueError("a burning cell cannot hold an agent")
        if self.smoke_level < 0 or self.fire_level < 0:
            raise ValueError("levels are nonnegative")


def state_of(cell: Cell) -> str:
    """Project a cell onto its label in {W, E, P, O, S, SF, PS}."""
    if cell.structure == Structure.WALL:
        return W
    if cell.structure == Structure.OBSTACLE:
        return O
    if cell.fire_level > 0:
        return SF
    if cell.occupant is not None:
        return PS if cell.smoke_level > 0 else P
    if cell.smoke_level > 0:
        return S
    return E


@dataclass(frozen=True)
class ExitSpec:
    id: int
    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))

    @property
    def width_cells(self) -> int:
        return len(self.cells)

    @property
    def name(self) -> str:
        return f"E{self.id}"

    @property
    def center(self) -> tuple:
        rows = [r for r, _ in self.cells]
        cols = [c for _, c in self.cells]
        return (sum(rows) / len(rows), sum(cols) / len(cols))


class Grid:
    """A ``height x width`` lattice of cells stored as parallel numpy arrays."""

    cell_side = CELL_SIDE

    def __init__(self, height: int, width: int):
        if height < 3 or width < 3:
            raise GeometryError("grid must be at least 3x3")
        self.height = height
        self.width = width
        shape = (height, width)
        self.structure = np.full(shape, Structure.FLOOR, dtype=np.int8)
        self.exit_id = np.full(shape, -1, dtype=np.int16)
        self.smoke = np.zeros(shape, dtype=np.int16)
        self.fire = np.zeros(shape, dtype=np.int16)
        self.occupant = np.full(shape, NO_AGENT, dtype=np.int32)
        self.combustible = np.zeros(shape, dtype=bool)
        self._neighbors = None

    @classmethod
    def room(cls, height: int, width: int) -> "Grid":
        """Empty room whose outermost ring is wall."""
        grid = cls(height, width)
        grid.structure[0, :] = Structure.WALL
        grid.structure[-1, :] = Structure.WALL
        grid.structure[:, 0] = Structure.WALL
        grid.structure[:, -1] = Structure.WALL
        return grid

    @classmethod
    def from_meters(cls, width_m: float, height_m: float) -> "Grid":
        return cls.room(cells_for_length(height_m), cells_for_length(width_m))

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.height * self.width

    def copy(self) -> "Grid":
        other = Grid.__new__(Grid)
        other.height, other.width = self.height, self.width
        for name in ("structure", "exit_id", "smoke", "fire", "occupant", "combustible"):
            setattr(other, name, getattr(self, name).copy())
        other._neighbors = self._neighbors
        return other

    def in_bounds(self, pos) -> bool:
        r, c = pos
        return 0 <= r < self.height and 0 <= c < self.width

    def flat(self, pos) -> int:
        return pos[0] * self.width + pos[1]

    def pos(self, index: int) -> tuple:
        return divmod(index, self.width)

    def cell(self, pos) -> Cell:
        r, c = pos
        occ = int(self.occupant[r, c])
        eid = int(self.exit_id[r, c])
        return Cell(
            structure=Structure(int(self.structure[r, c])),
            smoke_level=int(self.smoke[r, c]),
            fire_level=int(self.fire[r, c]),
            occupant=None if occ == NO_AGENT else occ,
            combustible=bool(self.combustible[r, c]),
            exit_id=None if eid < 0 else eid,
        )

    def state_at(self, pos) -> str:
        return state_of(self.cell(pos))

    def add_exit(self, exit_spec: ExitSpec) -> None:
        for r, c in exit_spec.cells:
            if not self.in_bounds((r, c)):
                raise GeometryError(f"exit {exit_spec.name} cell {(r, c)} out of bounds")
            self.structure[r, c] = Structure.EXIT
            self.exit_id[r, c] = exit_spec.id

    @property
    def walkable(self) -> np.ndarray:
        """Floor and exit cells (structure only, hazards ignored)."""
        return (self.structure == Structure.FLOOR) | (self.structure == Structure.EXIT)

    @property
    def solid(self) -> np.ndarray:
        return (self.structure == Structure.WALL) | (self.structure == Structure.OBSTACLE)

    def neighbor_table(self) -> list:
        """Flat-index Moore neighbours of every cell, row-major order, cached."""
        if self._neighbors is None:
            h, w = self.height, self.width
            table = []
            for r in range(h):
                for c in range(w):
                    table.append(tuple(
                        (r + dr) * w + (c + dc)
                        for dr, dc in MOORE_OFFSETS
                        if 0 <= r + dr < h and 0 <= c + dc < w
                    ))
            self._neighbors = table
        return self._neighbors

    def state_labels(self) -> np.ndarray:
        """Vectorised state_of over the whole grid (array of label strings)."""
        out = np.full(self.shape, E, dtype=object)
        occupied = self.occupant != NO_AGENT
        smoky = self.smoke > 0
        out[smoky] = S
        out[occupied] = P
        out[occupied & smoky] = PS
        out[self.fire > 0] = SF
        out[self.structure == Structure.OBSTACLE] = O
        out[self.structure == Structure.WALL] = W
        return out


def cells_for_length(meters: float) -> int:
    """Exact number of 0.4 m cells in ``meters``; non-multiples are rejected."""
    n = round(meters / CELL_SIDE)
    if n <= 0 or abs(n * CELL_SIDE - meters) > 1e-9:
        raise GeometryError(f"{meters} m is not divisible by cell size {CELL_SIDE} m")
    return n


def moore_neighborhood(grid: Grid, pos) -> list:
    """In-bounds positions at Chebyshev distance 1, in row-major offset order."""
    if not grid.in_bounds(pos):
        raise IndexError(f"position {pos} outside {grid.height}x{grid.width} grid")
    r, c = pos
    return [
        (r + dr, c + dc)
        for dr, dc in MOORE_OFFSETS
        if 0 <= r + dr < grid.height and 0 <= c + dc < grid.width
    ]


def _on_ring(grid: Grid, pos) -> bool:
    r, c = pos
    return r in (0, grid.height - 1) or c in (0, grid.width - 1)


def _is_corner(grid: Grid, pos) -> bool:
    r, c = pos
    return r in (0, grid.height - 1) and c in (0, grid.width - 1)


def validate_geometry(grid: Grid, exits) -> list:
    """Return a list of human-readable violations (empty when the layout is sound)."""
    problems = []
    h, w = grid.shape
    ring = np.zeros(grid.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True

    exit_cells = set()
    for ex in exits:
        exit_cells.update(ex.cells)
    for r, c in zip(*np.nonzero(ring)):
        kind = grid.structure[r, c]
        if kind == Structure.WALL:
            continue
        if kind == Structure.EXIT and (r, c) in exit_cells:
            continue
        problems.append(f"open boundary at {(int(r), int(c))}")

    seen_ids = set()
    for ex in exits:
        if ex.id in seen_ids:
            problems.append(f"duplicate exit id {ex.id}")
        seen_ids.add(ex.id)
        if ex.width_cells < 1:
            problems.append(f"exit {ex.name} has no cells")
            continue
        bad = False
        for p in ex.cells:
            if not grid.in_bounds(p):
                problems.append(f"exit {ex.name} cell {p} out of bounds")
                bad = True
            elif not _on_ring(grid, p) or _is_corner(grid, p):
                problems.append(f"exit {ex.name} cell {p} not on the boundary ring")
                bad = True
            elif grid.structure[p] != Structure.EXIT or grid.exit_id[p] != ex.id:
                problems.append(f"exit {ex.name} cell {p} not marked as exit floor")
                bad = True
        if bad:
            continue
        rows = {r for r, _ in ex.cells}
        cols = {c for _, c in ex.cells}
        if len(rows) == 1:
            span = sorted(cols)
        elif len(cols) == 1:
            span = sorted(rows)
        else:
            problems.append(f"exit {ex.name} cells are not collinear")
            continue
        if span != list(range(span[0], span[0] + len(span))) or len(span) != ex.width_cells:
            problems.append(f"non-contiguous exit {ex.name}")

    solid = grid.solid
    if np.any(solid & (grid.occupant != NO_AGENT)):
        problems.append("occupant on wall/obstacle cell")
    if np.any(solid & ((grid.smoke > 0) | (grid.fire > 0))):
        problems.append("hazard on wall/obstacle cell")

    floor = grid.structure == Structure.FLOOR
    for ex in exits:
        if not any(
            grid.in_bounds(p) and any(floor[q] for q in moore_neighborhood(grid, p))
            for p in ex.cells
        ):
            problems.append(f"exit {ex.name} unreachable from any floor cell")
    return problems
