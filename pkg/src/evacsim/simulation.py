"""Tick loop, run metrics and replication statistics."""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .behavior import control_step
from .grid import Grid
from .hazards import cost_array, heat_mask, step_fire, step_smoke
from .movement import apply, resolve
from .pathfield import field_from_costs, refresh_fields
from .scenario import ScenarioSpec, SimConfig

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 finaliser (Steele, Lea and Flood), used for seed splitting."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(master: int, i: int) -> int:
    return splitmix64((master ^ i) & MASK64)


class World:
    """Mutable state of one run plus the per-tick snapshot read by agents."""

    def __init__(self, spec: ScenarioSpec, grid: Grid, agents: list, seed: int):
        self.spec = spec
        self.grid = grid
        self.exits = list(spec.exits)
        self.exit_by_id = {ex.id: ex for ex in self.exits}
        self.agents = {a.id: a for a in agents}
        self.initial_count = len(agents)
        self.hazard_params = spec.hazards
        self.behavior_params = spec.behavior.resolved(grid.height, grid.width)
        ss_hazard, ss_agents = np.random.SeedSequence(seed).spawn(3)[1:]
        self.np_rng = np.random.default_rng(ss_hazard)
        self.rng = random.Random(int(ss_agents.generate_state(1, np.uint64)[0]))
        # desynchronise first reconsiderations so agents do not all re-deliberate on one tick
        for a in sorted(agents, key=lambda a: a.id):
            a.state.reconsider_phase = self.rng.randrange(max(self.behavior_params.base_period, 1))
        self.neighbors = grid.neighbor_table()
        self.tick = 0
        self.new_hazard_cells = []
        self.oriented = {}
        self.oriented_totals = {}
        self._update_hazard_views()
        self.fields = {ex.id: field_from_costs(grid, ex, self.costs, 0) for ex in self.exits}

    @property
    def active_agents(self) -> list:
        return [a for a in self.agents.values() if a.active]

    def _update_hazard_views(self):
        grid = self.grid
        self.heat = heat_mask(grid, self.hazard_params)
        self.costs = cost_array(grid, self.hazard_params, self.heat)
        self.enterable = np.isfinite(self.costs).ravel().tolist()
        self.hazard_flat = ((grid.fire > 0) | self.heat).ravel().tolist()
        self.los_blocker = grid.solid | (grid.fire > 0)
        self.interior_blockers = bool(self.los_blocker[1:-1, 1:-1].any())
        self.hazard_mask = (grid.fire > 0) | self.heat | (grid.smoke > 0)

    def snapshot(self):
        """Freeze what agents read during the intent phase."""
        self.occupancy = self.grid.occupant.ravel().tolist()
        oriented, totals = {}, {ex.id: 0 for ex in self.exits}
        for a in self.agents.values():
            if not a.active or a.state.last_move is None:
                continue
            src, dst = a.state.last_move
            toward = tuple(
                j for j, f in self.fields.items() if f.dist[dst] < f.dist[src]
            )
            if toward:
                oriented[a.id] = toward
                for j in toward:
                    totals[j] += 1
        self.oriented = oriented
        self.oriented_totals = totals

    def advance_hazards(self):
        grid = self.grid
        if not (grid.smoke.any() or grid.fire.any()):
            self.new_hazard_cells = []
            return False
        before = self.hazard_mask
        step_smoke(grid, self.hazard_params, self.np_rng)
        step_fire(grid, self.hazard_params, self.np_rng)
        self._update_hazard_views()
        fresh = self.hazard_mask & ~before
        self.new_hazard_cells = [(int(r), int(c)) for r, c in zip(*np.nonzero(fresh))]
        return True


@dataclass
class TickRecord:
    tick: int
    moved: dict
    stalled: set
    evacuated: dict          # agent id -> exit id
    previous_positions: dict


@dataclass
class AgentOutcome:
    agent_id: int
    behavior: str
    evac_time: Optional[float]   # None when the agent never got out
    distance_m: float
    exit_used: Optional[int]


@dataclass
class RunResult:
    tet_seconds: float
    per_agent: list
    exit_counts: dict
    trapped_count: int
    ticks: int
    seed: int = 0
    behavior_exit_counts: dict = field(default_factory=dict)  # (behavior, exit id) -> count

    @property
    def evacuated(self) -> list:
        return [o for o in self.per_agent if o.evac_time is not None]

    @property
    def met_seconds(self) -> float:
        ev = self.evacuated
        return sum(o.evac_time for o in ev) / len(ev) if ev else math.nan

    @property
    def md_meters(self) -> float:
        ev = self.evacuated
        return sum(o.distance_m for o in ev) / len(ev) if ev else math.nan


class Simulation:
    """One seeded run of a scenario."""

    def __init__(self, spec: ScenarioSpec, seed: int, max_ticks: Optional[int] = None):
        grid, agents = spec.instantiate(seed)
        self.seed = seed
        self.max_ticks = spec.sim.max_ticks if max_ticks is None else max_ticks
        self.world = World(spec, grid, agents, seed)

    @property
    def tick(self) -> int:
        return self.world.tick

    def finished(self) -> bool:
        active = self.world.active_agents
        if not active:
            return True
        if self.world.tick >= self.max_ticks:
            return True
        # hazards only grow, so agents with no reachable exit stay trapped
        return all(a.state.trapped for a in active)

    def step(self) -> TickRecord:
        w = self.world
        w.tick += 1
        tick = w.tick
        w.snapshot()
        active = sorted(w.active_agents, key=lambda a: a.id)
        prev = {a.id: a.state.position for a in active}
        intents = []
        for a in active:
            it = control_step(a, w, w.fields, tick)
            if it is not None:
                intents.append(it)
        profiles = {a.id: a.profile for a in active}
        outcome = resolve(intents, w.grid, profiles, w.rng, blocked=w.heat)
        apply(outcome, w.grid, w.agents, tick)
        with_intent = {it.agent_id for it in intents}
        for a in active:
            if a.id not in with_intent:
                a.state.blocked_steps += 1
        if w.advance_hazards():
            refresh_fields(w.fields, w.grid, tick, w.hazard_params, w.exits, w.heat)
        evacuated = {aid: int(w.grid.exit_id[pos]) for aid, pos in outcome.evacuated.items()}
        return TickRecord(tick, dict(outcome.moved), set(outcome.stalled), evacuated, prev)

    def run(self, on_tick: Optional[Callable] = None) -> RunResult:
        while not self.finished():
            record = self.step()
            if on_tick is not None:
                on_tick(self, record)
        return self.result()

    def result(self) -> RunResult:
        w = self.world
        tick_s = w.behavior_params.tick_seconds
        per_agent, counts, by_behavior = [], {ex.id: 0 for ex in w.exits}, {}
        last = 0
        for a in sorted(w.agents.values(), key=lambda a: a.id):
            st = a.state
            t = None if st.evacuated_at is None else st.evacuated_at * tick_s
            if st.evacuated_at is not None:
                last = max(last, st.evacuated_at)
                counts[st.exit_used] += 1
                key = (a.profile.behavior, st.exit_used)
                by_behavior[key] = by_behavior.get(key, 0) + 1
            per_agent.append(AgentOutcome(a.id, a.profile.behavior, t,
                                          st.distance_moves * w.grid.cell_side, st.exit_used))
        trapped = sum(1 for a in w.agents.values() if a.active)
        return RunResult(last * tick_s, per_agent, counts, trapped, w.tick, self.seed, by_behavior)


def run(scenario: ScenarioSpec, config: Optional[SimConfig] = None, seed: Optional[int] = None,
        on_tick: Optional[Callable] = None) -> RunResult:
    config = config or scenario.sim
    seed = config.seed if seed is None else seed
    return Simulation(scenario, seed, config.max_ticks).run(on_tick)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class Interval:
    lower: float
    mean: float
    upper: float
    std: float = 0.0


def ci(samples, level: float = 0.95) -> tuple:
    """Student-t confidence interval ``(lower, mean, upper)``."""
    xs = [float(x) for x in samples]
    n = len(xs)
    if n < 2:
        raise ValueError("a confidence interval needs at least two samples")
    mean = math.fsum(xs) / n
    s = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (n - 1))
    half = stats.t.ppf(0.5 + level / 2, n - 1) * s / math.sqrt(n)
    return (mean - half, mean, mean + half)


def _interval(xs, level=0.95) -> Interval:
    xs = [x for x in xs if not math.isnan(x)]
    if len(xs) < 2:
        m = xs[0] if xs else math.nan
        return Interval(m, m, m, math.nan)
    lo, m, hi = ci(xs, level)
    s = math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))
    return Interval(lo, m, hi, s)


@dataclass
class ReplicationStats:
    name: str
    n: int
    tet: Interval
    met: Interval
    md: Interval
    exit_means: dict                # exit id -> mean count
    behavior_exit_means: dict       # (behavior, exit id) -> mean count
    trapped_mean: float
    runs: list = field(default_factory=list, repr=False)

    @property
    def behaviors(self) -> list:
        return sorted({b for b, _ in self.behavior_exit_means})

    @classmethod
    def from_runs(cls, name: str, runs: list, level: float = 0.95) -> "ReplicationStats":
        if len(runs) < 2:
            raise ValueError("replication statistics need at least two runs")
        n = len(runs)
        exits = sorted({j for r in runs for j in r.exit_counts})
        keys = sorted({k for r in runs for k in r.behavior_exit_counts})
        behaviors = sorted({b for b, _ in keys})
        keys = [(b, j) for b in behaviors for j in exits]
        return cls(
            name=name,
            n=n,
            tet=_interval([r.tet_seconds for r in runs], level),
            met=_interval([r.met_seconds for r in runs], level),
            md=_interval([r.md_meters for r in runs], level),
            exit_means={j: math.fsum(r.exit_counts.get(j, 0) for r in runs) / n for j in exits},
            behavior_exit_means={
                k: math.fsum(r.behavior_exit_counts.get(k, 0) for r in runs) / n for k in keys
            },
            trapped_mean=math.fsum(r.trapped_count for r in runs) / n,
            runs=runs,
        )


def _run_one(args):
    scenario, config, seed = args
    return run(scenario, config, seed)


def replicate(scenario: ScenarioSpec, config: Optional[SimConfig] = None, workers: int = 1,
              on_tick: Optional[Callable] = None) -> ReplicationStats:
    """Independent seeded runs aggregated into confidence intervals.

    Replication ``i`` uses ``splitmix64(master_seed XOR i)``, so any single run
    can be reproduced alone and the result does not depend on ``workers``.
    """
    config = config or scenario.sim
    if config.replications < 2:
        raise ValueError("replicate needs at least two replications")
    seeds = [replication_seed(config.seed, i) for i in range(config.replications)]
    if workers > 1 and on_tick is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, [(scenario, config, s) for s in seeds]))
    else:
        runs = [run(scenario, config, s, on_tick) for s in seeds]
    return ReplicationStats.from_runs(scenario.name, runs)
