"""Scenario files: data model, parser, writer and bundled presets.

Format (one directive per line, ``#`` starts a comment)::

    evacsim-scenario v1
    name = caseA
    width_m = 20
    height_m = 30
    population = 625

    [sim]
    seed = 1
    max_ticks = 3000
    replications = 50

    [hazards]           beta_smoke, beta_fire, max_level, heat_radius, smoke_weight
    [behavior]          base_period (int | auto), growth_divisor, sight_range (int | full),
                        sight_range_smoke, prudential_limit
    [transition]        from, event, to              (repeatable section)
    [exit]              id, cells = r,c r,c ...      (repeatable section)
    [walls] / [obstacles] / [fire]
                        rect = r0,c0 r1,c1 (inclusive, repeatable), cell = r,c (repeatable)
    [combustible]       all_floor = yes|no, rect, cell
    [group]             count, behavior = NE|BPE, placement = uniform|cells,
                        cells = r,c ..., speed, damage, stress_tolerance, sex, age
                        (repeatable section)

Profile values are either a constant (``2``), ``uniform lo hi`` (integers
for speed and damage, reals for stress tolerance) or ``choice a b c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .behavior import BEHAVIORS, EVENTS, AgentProfile, BehaviorParams, make_agent
from .grid import ExitSpec, GeometryError, Grid, Structure, cells_for_length, validate_geometry
from .hazards import HazardParams, heat_mask

HEADER = "evacsim-scenario v1"
PRESETS = ("caseA", "caseB", "caseC", "caseD", "caseE", "caseF", "caseG")


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario descriptions."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    max_ticks: int = 3000
    replications: int = 50
    tick_seconds: float = 0.3

    def __post_init__(self):
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be >= 1")
        if self.tick_seconds != 0.3:
            raise ValueError("tick_seconds is fixed at 0.3 s")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass(frozen=True)
class Dist:
    kind: str = "const"
    values: tuple = (1,)

    @classmethod
    def const(cls, v):
        return cls("const", (v,))

    def sample(self, rng, integer=True):
        if self.kind == "const":
            return self.values[0]
        if self.kind == "choice":
            return self.values[int(rng.integers(len(self.values)))]
        lo, hi = self.values
        if integer:
            return int(rng.integers(lo, hi + 1))
        return float(rng.uniform(lo, hi))

    def __str__(self):
        vals = " ".join(_num(v) for v in self.values)
        return vals if self.kind == "const" else f"{self.kind} {vals}"


@dataclass
class AgentGroup:
    count: int
    behavior: str = "NE"
    placement: str = "uniform"
    cells: list = field(default_factory=list)
    speed: Dist = Dist.const(1)
    damage: Dist = Dist.const(0)
    stress_tolerance: Dist = Dist.const(10)
    sex: Optional[str] = None
    age: Optional[int] = None


@dataclass
class ScenarioSpec:
    name: str
    width_m: float
    height_m: float
    population: int
    exits: list
    groups: list
    walls: list = field(default_factory=list)        # rects ((r0, c0), (r1, c1)), inclusive
    obstacles: list = field(default_factory=list)
    combustible_all: bool = False
    combustible: list = field(default_factory=list)
    fire_seeds: list = field(default_factory=list)
    hazards: HazardParams = field(default_factory=HazardParams)
    behavior: BehaviorParams = field(default_factory=BehaviorParams)
    transitions: dict = field(default_factory=dict)  # (state, event) -> state
    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def shape(self):
        return cells_for_length(self.height_m), cells_for_length(self.width_m)

    def base_grid(self) -> Grid:
        """The static layout (structure, combustibility, fire seeds), no agents."""
        grid = Grid.from_meters(self.width_m, self.height_m)
        for rects, kind in ((self.walls, Structure.WALL), (self.obstacles, Structure.OBSTACLE)):
            for (r0, c0), (r1, c1) in rects:
                grid.structure[r0:r1 + 1, c0:c1 + 1] = kind
        for ex in self.exits:
            grid.add_exit(ex)
        if self.combustible_all:
            grid.combustible[grid.structure == Structure.FLOOR] = True
        for (r0, c0), (r1, c1) in self.combustible:
            grid.combustible[r0:r1 + 1, c0:c1 + 1] = True
        grid.combustible &= grid.walkable
        for (r0, c0), (r1, c1) in self.fire_seeds:
            grid.fire[r0:r1 + 1, c0:c1 + 1] = 1
            grid.smoke[r0:r1 + 1, c0:c1 + 1] = np.maximum(grid.smoke[r0:r1 + 1, c0:c1 + 1], 1)
        return grid

    def validate(self) -> list:
        problems = []
        try:
            h, w = self.shape
        except GeometryError as exc:
            return [str(exc)]
        for label, rects in (("wall", self.walls), ("obstacle", self.obstacles),
                             ("combustible", self.combustible), ("fire", self.fire_seeds)):
            for (r0, c0), (r1, c1) in rects:
                if not (0 <= r0 <= r1 < h and 0 <= c0 <= c1 < w):
                    problems.append(f"{label} rect {(r0, c0)}-{(r1, c1)} outside {h}x{w} grid")
        for g in self.groups:
            for p in g.cells:
                if not (0 <= p[0] < h and 0 <= p[1] < w):
                    problems.append(f"agent cell {p} outside {h}x{w} grid")
        if problems:
            return problems
        try:
            grid = self.base_grid()
        except GeometryError as exc:
            return [str(exc)]
        problems.extend(validate_geometry(grid, self.exits))
        if not self.exits:
            problems.append("no exits declared")
        if sum(g.count for g in self.groups) != self.population:
            problems.append(
                f"group counts sum to {sum(g.count for g in self.groups)}, population is {self.population}"
            )
        fire_cells = grid.fire > 0
        if np.any(fire_cells & ~grid.walkable):
            problems.append("fire seeded on a wall or obstacle")
        free = (grid.structure == Structure.FLOOR) & ~heat_mask(grid, self.hazards) & (grid.smoke == 0)
        explicit = set()
        for g in self.groups:
            if g.placement == "cells":
                if len(g.cells) != g.count:
                    problems.append(f"group lists {len(g.cells)} cells for {g.count} agents")
                for p in g.cells:
                    if p in explicit:
                        problems.append(f"two agents placed on {p}")
                    elif not free[p]:
                        problems.append(f"agent placed on non-free cell {p}")
                    explicit.add(p)
        uniform = sum(g.count for g in self.groups if g.placement == "uniform")
        if uniform > int(free.sum()) - len(explicit):
            problems.append("not enough free floor cells for uniform placement")
        return problems

    def instantiate(self, seed: int):
        """Build ``(grid, agents)`` for one run; placement and profiles follow ``seed``."""
        problems = self.validate()
        if problems:
            raise ScenarioError("; ".join(problems))
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        grid = self.base_grid()
        free = (grid.structure == Structure.FLOOR) & ~heat_mask(grid, self.hazards) & (grid.smoke == 0)
        for g in self.groups:
            for p in g.cells:
                free[p] = False
        pool = np.flatnonzero(free)
        n_uniform = sum(g.count for g in self.groups if g.placement == "uniform")
        drawn = iter(rng.choice(pool, size=n_uniform, replace=False).tolist())
        agents = []
        for g in self.groups:
            for k in range(g.count):
                pos = tuple(g.cells[k]) if g.placement == "cells" else grid.pos(next(drawn))
                profile = AgentProfile(
                    id=len(agents),
                    speed=int(g.speed.sample(rng)),
                    damage_points=int(g.damage.sample(rng)),
                    stress_tolerance=float(g.stress_tolerance.sample(rng, integer=False)),
                    behavior=g.behavior,
                    sex=g.sex,
                    age=g.age,
                )
                agent = make_agent(profile, pos, self.transitions)
                grid.occupant[pos] = profile.id
                agents.append(agent)
        return grid, agents


# ---------------------------------------------------------------- parsing

def _num(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def _parse_int(text, line, minimum=None):
    try:
        v = int(text)
    except ValueError:
        raise ScenarioError(f"expected an integer, got {text!r}", line) from None
    if minimum is not None and v < minimum:
        raise ScenarioError(f"value {v} below minimum {minimum}", line)
    return v


def _parse_float(text, line):
    try:
        v = float(text)
    except ValueError:
        raise ScenarioError(f"expected a number, got {text!r}", line) from None
    if not math.isfinite(v):
        raise ScenarioError(f"non-finite number {text!r}", line)
    return v


def _parse_bool(text, line):
    low = text.lower()
    if low in ("yes", "true", "1"):
        return True
    if low in ("no", "false", "0"):
        return False
    raise ScenarioError(f"expected yes/no, got {text!r}", line)


def _parse_cell(text, line):
    parts = text.split(",")
    if len(parts) != 2:
        raise ScenarioError(f"expected r,c, got {text!r}", line)
    return (_parse_int(parts[0], line, 0), _parse_int(parts[1], line, 0))


def _parse_cells(text, line):
    return [_parse_cell(t, line) for t in text.split()]


def _parse_rect(text, line):
    cells = _parse_cells(text, line)
    if len(cells) != 2:
        raise ScenarioError("rect needs two corners r0,c0 r1,c1", line)
    (r0, c0), (r1, c1) = cells
    if r1 < r0 or c1 < c0:
        raise ScenarioError("rect corners must be top-left then bottom-right", line)
    return ((r0, c0), (r1, c1))


def _parse_dist(text, line, integer):
    parts = text.split()
    conv = (lambda t: _parse_int(t, line)) if integer else (lambda t: _parse_float(t, line))
    if len(parts) == 1:
        return Dist("const", (conv(parts[0]),))
    kind, vals = parts[0], tuple(conv(t) for t in parts[1:])
    if kind == "uniform":
        if len(vals) != 2 or vals[1] < vals[0]:
            raise ScenarioError("uniform needs lo hi with lo <= hi", line)
    elif kind == "choice":
        if not vals:
            raise ScenarioError("choice needs at least one value", line)
    else:
        raise ScenarioError(f"unknown distribution {kind!r}", line)
    return Dist(kind, vals)


_TOP_KEYS = {"name", "width_m", "height_m", "population"}
_SECTION_KEYS = {
    "sim": {"seed", "max_ticks", "replications"},
    "hazards": {"beta_smoke", "beta_fire", "max_level", "heat_radius", "smoke_weight"},
    "behavior": {"base_period", "growth_divisor", "sight_range", "sight_range_smoke", "prudential_limit"},
    "transition": {"from", "event", "to"},
    "exit": {"id", "cells"},
    "walls": {"rect", "cell"},
    "obstacles": {"rect", "cell"},
    "fire": {"rect", "cell"},
    "combustible": {"all_floor", "rect", "cell"},
    "group": {"count", "behavior", "placement", "cells", "speed", "damage", "stress_tolerance", "sex", "age"},
}
_REPEATABLE_KEYS = {"rect", "cell"}
_REPEATABLE_SECTIONS = {"transition", "exit", "group", "walls", "obstacles", "fire", "combustible"}


def _tokenize(text):
    """Yield ``(line_no, section, key, value)``; ``key`` is None on section headers."""
    lines = text.splitlines()
    first = None
    for no, raw in enumerate(lines, 1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if first is None:
            first = no
            if stripped != HEADER:
                raise ScenarioError(f"first line must be {HEADER!r}", no)
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ScenarioError("unterminated section header", no)
            name = stripped[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise ScenarioError(f"unknown section [{name}]", no)
            yield no, name, None, None
            continue
        if "=" not in stripped:
            raise ScenarioError(f"expected key = value, got {stripped!r}", no)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not value:
            raise ScenarioError(f"empty value for {key!r}", no)
        yield no, None, key, value
    if first is None:
        raise ScenarioError("empty scenario")


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse scenario text; raises ScenarioError on syntax or semantic problems."""
    top = {}
    sections = []   # (name, line, {key: [(line, value), ...]})
    current = None
    for no, sec, key, value in _tokenize(text):
        if key is None:
            if sec not in _REPEATABLE_SECTIONS and any(s[0] == sec for s in sections):
                raise ScenarioError(f"section [{sec}] given twice", no)
            current = (sec, no, {})
            sections.append(current)
            continue
        allowed = _TOP_KEYS if current is None else _SECTION_KEYS[current[0]]
        where = "top level" if current is None else f"[{current[0]}]"
        if key not in allowed:
            raise ScenarioError(f"unknown key {key!r} in {where}", no)
        store = top if current is None else current[2]
        if key in store and key not in _REPEATABLE_KEYS:
            raise ScenarioError(f"duplicate key {key!r} in {where}", no)
        store.setdefault(key, []).append((no, value))

    def one(store, key, conv, default=None, required=False, section="top level"):
        if key not in store:
            if required:
                raise ScenarioError(f"missing required key {key!r} in {section}")
            return default
        no, value = store[key][0]
        return conv(value, no)

    name = one(top, "name", lambda v, n: v, required=True)
    width_m = one(top, "width_m", _parse_float, required=True)
    height_m = one(top, "height_m", _parse_float, required=True)
    population = one(top, "population", lambda v, n: _parse_int(v, n, 0), required=True)

    hazards, behavior, sim = HazardParams(), BehaviorParams(), SimConfig()
    exits, groups, transitions = [], [], {}
    walls, obstacles, fire, combustible = [], [], [], []
    combustible_all = False

    def rects(store):
        out = [_parse_rect(v, n) for n, v in store.get("rect", [])]
        out += [(c, c) for c in (_parse_cell(v, n) for n, v in store.get("cell", []))]
        return out

    for sec, sec_line, store in sections:
        label = f"[{sec}]"
        try:
            if sec == "sim":
                sim = SimConfig(
                    seed=one(store, "seed", lambda v, n: _parse_int(v, n, 0), sim.seed),
                    max_ticks=one(store, "max_ticks", lambda v, n: _parse_int(v, n, 1), sim.max_ticks),
                    replications=one(store, "replications", lambda v, n: _parse_int(v, n, 1), sim.replications),
                )
            elif sec == "hazards":
                d = HazardParams()
                hazards = HazardParams(
                    beta_smoke=one(store, "beta_smoke", _parse_float, d.beta_smoke),
                    beta_fire=one(store, "beta_fire", _parse_float, d.beta_fire),
                    max_level=one(store, "max_level", lambda v, n: _parse_int(v, n, 1), d.max_level),
                    heat_radius=one(store, "heat_radius", lambda v, n: _parse_int(v, n, 0), d.heat_radius),
                    smoke_weight=one(store, "smoke_weight", _parse_float, d.smoke_weight),
                )
            elif sec == "behavior":
                d = BehaviorParams()
                behavior = BehaviorParams(
                    base_period=one(store, "base_period",
                                    lambda v, n: None if v == "auto" else _parse_int(v, n, 0), d.base_period),
                    growth_divisor=one(store, "growth_divisor", lambda v, n: _parse_int(v, n, 1), d.growth_divisor),
                    sight_range=one(store, "sight_range",
                                    lambda v, n: None if v == "full" else _parse_int(v, n, 0), d.sight_range),
                    sight_range_smoke=one(store, "sight_range_smoke",
                                          lambda v, n: _parse_int(v, n, 0), d.sight_range_smoke),
                    prudential_limit=one(store, "prudential_limit",
                                         lambda v, n: _parse_int(v, n, 1), d.prudential_limit),
                )
            elif sec == "transition":
                def behavior_name(v, n):
                    if v not in BEHAVIORS:
                        raise ScenarioError(f"unknown behavior {v!r}", n)
                    return v

                def event_name(v, n):
                    if v not in EVENTS:
                        raise ScenarioError(f"unknown event {v!r}", n)
                    return v
                src = one(store, "from", behavior_name, required=True, section=label)
                ev = one(store, "event", event_name, required=True, section=label)
                dst = one(store, "to", behavior_name, required=True, section=label)
                transitions[(src, ev)] = dst
            elif sec == "exit":
                exits.append(ExitSpec(
                    one(store, "id", lambda v, n: _parse_int(v, n, 0), required=True, section=label),
                    one(store, "cells", _parse_cells, required=True, section=label),
                ))
            elif sec == "walls":
                walls += rects(store)
            elif sec == "obstacles":
                obstacles += rects(store)
            elif sec == "fire":
                fire += rects(store)
            elif sec == "combustible":
                combustible_all = one(store, "all_floor", _parse_bool, combustible_all)
                combustible += rects(store)
            elif sec == "group":
                def behavior_key(v, n):
                    if v not in BEHAVIORS:
                        raise ScenarioError(f"unknown behavior {v!r} (expected NE or BPE)", n)
                    return v

                def placement_key(v, n):
                    if v not in ("uniform", "cells"):
                        raise ScenarioError(f"unknown placement {v!r}", n)
                    return v
                g = AgentGroup(
                    count=one(store, "count", lambda v, n: _parse_int(v, n, 0), required=True, section=label),
                    behavior=one(store, "behavior", behavior_key, "NE"),
                    placement=one(store, "placement", placement_key, "uniform"),
                    cells=one(store, "cells", _parse_cells, []),
                    speed=one(store, "speed", lambda v, n: _parse_dist(v, n, True), Dist.const(1)),
                    damage=one(store, "damage", lambda v, n: _parse_dist(v, n, True), Dist.const(0)),
                    stress_tolerance=one(store, "stress_tolerance",
                                         lambda v, n: _parse_dist(v, n, False), Dist.const(10.0)),
                    sex=one(store, "sex", lambda v, n: v, None),
                    age=one(store, "age", lambda v, n: _parse_int(v, n, 0), None),
                )
                if g.placement == "cells" and not g.cells:
                    raise ScenarioError("placement = cells needs a cells list", sec_line)
                if g.placement == "uniform" and g.cells:
                    raise ScenarioError("cells given with uniform placement", sec_line)
                groups.append(g)
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"{label}: {exc}", sec_line) from None

    spec = ScenarioSpec(
        name=name, width_m=width_m, height_m=height_m, population=population,
        exits=exits, groups=groups, walls=walls, obstacles=obstacles,
        combustible_all=combustible_all, combustible=combustible, fire_seeds=fire,
        hazards=hazards, behavior=behavior, transitions=transitions, sim=sim,
    )
    problems = spec.validate()
    if problems:
        raise ScenarioError("; ".join(problems))
    return spec


# ---------------------------------------------------------------- writing

def _cell_text(p):
    return f"{p[0]},{p[1]}"


def _rect_lines(rects):
    out = []
    for a, b in rects:
        out.append(f"cell = {_cell_text(a)}" if a == b else f"rect = {_cell_text(a)} {_cell_text(b)}")
    return out


def emit_scenario(spec: ScenarioSpec) -> str:
    """Serialise ``spec`` in the scenario format; ``parse_scenario`` inverts it."""
    out = [HEADER, f"name = {spec.name}", f"width_m = {_num(spec.width_m)}",
           f"height_m = {_num(spec.height_m)}", f"population = {spec.population}", ""]
    out += ["[sim]", f"seed = {spec.sim.seed}", f"max_ticks = {spec.sim.max_ticks}",
            f"replications = {spec.sim.replications}", ""]
    out.append("[hazards]")
    for f in dc_fields(HazardParams):
        out.append(f"{f.name} = {_num(getattr(spec.hazards, f.name))}")
    b = spec.behavior
    out += ["", "[behavior]",
            f"base_period = {'auto' if b.base_period is None else b.base_period}",
            f"growth_divisor = {b.growth_divisor}",
            f"sight_range = {'full' if b.sight_range is None else b.sight_range}",
            f"sight_range_smoke = {b.sight_range_smoke}",
            f"prudential_limit = {b.prudential_limit}", ""]
    for (src, ev), dst in spec.transitions.items():
        out += ["[transition]", f"from = {src}", f"event = {ev}", f"to = {dst}", ""]
    for ex in spec.exits:
        out += ["[exit]", f"id = {ex.id}", "cells = " + " ".join(_cell_text(p) for p in ex.cells), ""]
    for sec, rects in (("walls", spec.walls), ("obstacles", spec.obstacles), ("fire", spec.fire_seeds)):
        if rects:
            out += [f"[{sec}]", *_rect_lines(rects), ""]
    if spec.combustible_all or spec.combustible:
        out.append("[combustible]")
        if spec.combustible_all:
            out.append("all_floor = yes")
        out += [*_rect_lines(spec.combustible), ""]
    for g in spec.groups:
        out += ["[group]", f"count = {g.count}", f"behavior = {g.behavior}", f"placement = {g.placement}"]
        if g.cells:
            out.append("cells = " + " ".join(_cell_text(p) for p in g.cells))
        out += [f"speed = {g.speed}", f"damage = {g.damage}", f"stress_tolerance = {g.stress_tolerance}"]
        if g.sex is not None:
            out.append(f"sex = {g.sex}")
        if g.age is not None:
            out.append(f"age = {g.age}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- presets

def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("evacsim.presets").joinpath(f"{name}.scn").read_text()


def load_preset(name: str) -> ScenarioSpec:
    return parse_scenario(preset_text(name))


def load_scenario(source: str) -> ScenarioSpec:
    """A preset name or a path to a scenario file."""
    if source in PRESETS:
        return load_preset(source)
    return parse_scenario(Path(source).read_text())
