"""Agent control loop: perception, deliberation and the two exit-choice behaviours."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .grid import NO_AGENT

NE = "NE"    # Nearest Exit
BPE = "BPE"  # Best Predicted Exit
BEHAVIORS = (NE, BPE)

OBJECTIVE_INFEASIBLE = "objective_infeasible"
STRESS_EXCEEDS_TOLERANCE = "stress_exceeds_tolerance"
EVENTS = (OBJECTIVE_INFEASIBLE, STRESS_EXCEEDS_TOLERANCE)

TICK_SECONDS = 0.3


@dataclass(frozen=True)
class BehaviorParams:
    base_period: Optional[int] = None    # None: derived from the grid diagonal
    growth_divisor: int = 100
    sight_range: Optional[int] = None    # None: unlimited
    sight_range_smoke: int = 2
    prudential_limit: int = 3
    tick_seconds: float = TICK_SECONDS

    def __post_init__(self):
        if self.base_period is not None and self.base_period < 0:
            raise ValueError("base_period must be >= 0")
        if self.growth_divisor < 1:
            raise ValueError("growth_divisor must be >= 1")
        if self.sight_range is not None and self.sight_range < 0:
            raise ValueError("sight_range must be >= 0")
        if self.sight_range_smoke < 0 or self.prudential_limit < 1:
            raise ValueError("sight_range_smoke must be >= 0 and prudential_limit >= 1")

    def resolved(self, height: int, width: int) -> "BehaviorParams":
        if self.base_period is not None:
            return self
        return replace(self, base_period=default_base_period(height, width))


def default_base_period(height: int, width: int) -> int:
    return math.ceil(math.hypot(height, width) / 5)


@dataclass(frozen=True)
class AgentProfile:
    id: int
    speed: int = 1
    damage_points: int = 0
    stress_tolerance: float = 10.0
    behavior: str = NE
    sex: Optional[str] = None
    age: Optional[int] = None
    known_exits: Optional[frozenset] = None  # None: knows every exit

    def __post_init__(self):
        if self.speed < 1:
            raise ValueError("speed must be >= 1")
        if self.damage_points < 0:
            raise ValueError("damage_points must be >= 0")
        if not self.stress_tolerance > 0:
            raise ValueError("stress_tolerance must be > 0")
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")


@dataclass
class AgentState:
    position: tuple
    objective_exit: Optional[int] = None
    stress: float = 0.0
    distance_moves: int = 0
    blocked_steps: int = 0
    last_deliberation_tick: Optional[int] = None
    reconsider_phase: int = 0    # extra wait before the first reconsideration only
    evacuated_at: Optional[int] = None
    exit_used: Optional[int] = None
    last_move: Optional[tuple] = None
    stress_alarm: bool = False
    trapped: bool = False
    deliberations: int = 0
    objective_changes: int = 0


@dataclass
class BehaviorState:
    """Engine of behaviours: a finite automaton over behaviour nodes.

    ``transition_table`` maps ``(state, event)`` to the next state. A table
    entry may list several successors, in which case one is drawn with the
    supplied generator.
    """

    current: str = NE
    transition_table: dict = field(default_factory=dict)

    def fire(self, event: str, rng=None) -> str:
        if event not in EVENTS:
            raise ValueError(f"undeclared event {event!r}")
        nxt = self.transition_table.get((self.current, event))
        if nxt is None:
            return self.current
        if isinstance(nxt, (tuple, list)):
            nxt = nxt[0] if rng is None or len(nxt) == 1 else rng.choice(list(nxt))
        self.current = nxt
        return nxt


@dataclass
class Agent:
    profile: AgentProfile
    state: AgentState
    behavior: BehaviorState

    @property
    def id(self) -> int:
        return self.profile.id

    @property
    def active(self) -> bool:
        return self.state.evacuated_at is None


def make_agent(profile: AgentProfile, position, transition_table=None) -> Agent:
    return Agent(
        profile,
        AgentState(tuple(position)),
        BehaviorState(profile.behavior, dict(transition_table or {})),
    )


@dataclass(frozen=True)
class MoveIntent:
    agent_id: int
    origin: tuple
    target: tuple


# ---------------------------------------------------------------- line of sight

def _between(a, b):
    """Cells strictly between ``a`` and ``b`` on a rounded DDA line."""
    (r0, c0), (r1, c1) = a, b
    dr, dc = r1 - r0, c1 - c0
    n = max(abs(dr), abs(dc))
    # round-half-up of k*d/n in exact integer arithmetic
    return [
        (r0 + (2 * dr * s + n) // (2 * n), c0 + (2 * dc * s + n) // (2 * n))
        for s in range(1, n)
    ]


def line_of_sight(blocker: np.ndarray, a, b) -> bool:
    return not any(blocker[p] for p in _between(a, b))


def visible_mask(blocker: np.ndarray, origin, targets: np.ndarray) -> np.ndarray:
    """Vectorised ``line_of_sight`` from ``origin`` to each row of ``targets``."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    if len(targets) == 0:
        return np.zeros(0, dtype=bool)
    r0, c0 = origin
    dr = targets[:, 0] - r0
    dc = targets[:, 1] - c0
    n = np.maximum(np.abs(dr), np.abs(dc))
    m = int(n.max())
    if m < 2:
        return np.ones(len(targets), dtype=bool)
    s = np.arange(1, m)
    nn = np.maximum(n, 1)[:, None]
    rr = r0 + (2 * dr[:, None] * s + nn) // (2 * nn)
    cc = c0 + (2 * dc[:, None] * s + nn) // (2 * nn)
    valid = s[None, :] < n[:, None]
    rr = np.where(valid, rr, r0)
    cc = np.where(valid, cc, c0)
    hit = blocker[rr, cc] & valid
    return ~hit.any(axis=1)


def _chebyshev(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


# ---------------------------------------------------------------- perception

class Percept:
    """What one agent sees this tick. Expensive parts are evaluated on demand."""

    def __init__(self, world, agent: Agent):
        self.world = world
        self.agent = agent
        pos = agent.state.position
        params = world.behavior_params
        radius = params.sight_range
        if world.grid.smoke[pos] > 0:
            radius = params.sight_range_smoke if radius is None else min(radius, params.sight_range_smoke)
        self.radius = radius
        self.clear_view = radius is None and not world.interior_blockers

    def sees(self, pos) -> bool:
        me = self.agent.state.position
        if self.radius is not None and _chebyshev(me, pos) > self.radius:
            return False
        if self.clear_view:
            return True
        return line_of_sight(self.world.los_blocker, me, pos)

    @cached_property
    def visible_positions(self) -> set:
        grid = self.world.grid
        me = self.agent.state.position
        rows, cols = np.indices(grid.shape)
        cand = np.ones(grid.shape, dtype=bool)
        if self.radius is not None:
            cand &= np.maximum(np.abs(rows - me[0]), np.abs(cols - me[1])) <= self.radius
        pts = np.argwhere(cand)
        if not self.clear_view:
            pts = pts[visible_mask(self.world.los_blocker, me, pts)]
        return {(int(r), int(c)) for r, c in pts}

    @cached_property
    def visible_exits(self) -> set:
        known = self.agent.profile.known_exits
        out = set()
        for ex in self.world.exits:
            if known is not None and ex.id not in known:
                continue
            if any(self.sees(p) for p in ex.cells):
                out.add(ex.id)
        return out

    @cached_property
    def oriented_counts(self) -> dict:
        world = self.world
        exits = self.visible_exits
        if not exits:
            return {}
        me = self.agent.id
        if self.clear_view:
            counts = {j: world.oriented_totals.get(j, 0) for j in exits}
            for j in world.oriented.get(me, ()):
                if j in counts:
                    counts[j] -= 1
            return counts
        others = [a for a in world.active_agents if a.id != me and world.oriented.get(a.id)]
        counts = {j: 0 for j in exits}
        if not others:
            return counts
        pts = np.array([a.state.position for a in others])
        mine = self.agent.state.position
        seen = np.ones(len(others), dtype=bool)
        if self.radius is not None:
            seen &= np.maximum(np.abs(pts[:, 0] - mine[0]), np.abs(pts[:, 1] - mine[1])) <= self.radius
        if not self.world.interior_blockers:
            pass
        elif seen.any():
            idx = np.nonzero(seen)[0]
            seen[idx] = visible_mask(world.los_blocker, mine, pts[idx])
        for a, ok in zip(others, seen):
            if ok:
                for j in world.oriented[a.id]:
                    if j in counts:
                        counts[j] += 1
        return counts

    @cached_property
    def hazard_deltas(self) -> set:
        return {p for p in self.world.new_hazard_cells if self.sees(p)}

    @cached_property
    def sees_new_hazard(self) -> bool:
        if "hazard_deltas" in self.__dict__:
            return bool(self.hazard_deltas)
        return any(self.sees(p) for p in self.world.new_hazard_cells)


def perceive(world, agent: Agent) -> Percept:
    if not agent.active:
        raise ValueError(f"agent {agent.id} already evacuated")
    return Percept(world, agent)


# ---------------------------------------------------------------- estimates

def estimate_I(percept: Percept, j: int) -> int:
    if j not in percept.visible_exits:
        return 1
    return percept.oriented_counts.get(j, 0) + 1


def estimate_evac_time(I_j: int, exit_spec, tick_seconds: float = TICK_SECONDS) -> float:
    if exit_spec.width_cells < 1:
        raise ValueError("exit has no cells")
    return math.ceil(I_j / exit_spec.width_cells) * tick_seconds


def min_pred_time_to(pred_dist_j: float, tick_seconds: float = TICK_SECONDS) -> float:
    if not math.isfinite(pred_dist_j):
        return math.inf
    return pred_dist_j * tick_seconds


def cost(j, min_pred_time_to_j: float, evac_pred_time_j: float, pred_dist_j: float, I_j: float) -> float:
    """Predicted cost of leaving through exit ``j``.

    When the agent needs at least as long to reach the door as the door needs
    to drain, the queue is ignored; otherwise the drain time multiplies in.
    """
    if not math.isfinite(pred_dist_j):
        return math.inf
    if min(min_pred_time_to_j, evac_pred_time_j, pred_dist_j, I_j) < 0:
        raise ValueError("cost inputs must be nonnegative")
    I_j = max(I_j, 1)
    base = min_pred_time_to_j * pred_dist_j * I_j
    if min_pred_time_to_j >= evac_pred_time_j:
        return base
    return evac_pred_time_j * base


def reconsider_allowed(agent: Agent, tick: int, params: BehaviorParams) -> bool:
    last = agent.state.last_deliberation_tick
    if last is None:
        return True
    if params.base_period is None:
        raise ValueError("base_period unresolved; call BehaviorParams.resolved first")
    period = params.base_period + tick // params.growth_divisor
    if agent.state.deliberations <= 1:
        period += agent.state.reconsider_phase
    return tick - last >= period


# ---------------------------------------------------------------- deliberation

def _known(agent, fields):
    known = agent.profile.known_exits
    return [j for j in sorted(fields) if known is None or j in known]


def nearest_exit(fields: dict, pos, known=None) -> Optional[int]:
    best, best_d = None, math.inf
    for j in sorted(fields):
        if known is not None and j not in known:
            continue
        d = fields[j].dist[pos]
        if d < best_d:
            best, best_d = j, d
    return best


def exit_costs(agent: Agent, percept: Percept, fields: dict) -> dict:
    world = percept.world
    tick_s = world.behavior_params.tick_seconds
    pos = agent.state.position
    out = {}
    for j in _known(agent, fields):
        d = float(fields[j].dist[pos])
        if not math.isfinite(d):
            continue
        I = estimate_I(percept, j)
        evac = estimate_evac_time(I, world.exit_by_id[j], tick_s)
        out[j] = cost(j, min_pred_time_to(d, tick_s), evac, d, I)
    return out


def best_predicted_exit(agent: Agent, percept: Percept, fields: dict) -> Optional[int]:
    costs = exit_costs(agent, percept, fields)
    if not costs:
        return None
    return min(costs, key=lambda j: (costs[j], j))


def deliberate(agent: Agent, percept: Percept, fields: dict, tick: int) -> Optional[int]:
    st = agent.state
    if agent.behavior.current == BPE:
        choice = best_predicted_exit(agent, percept, fields)
    else:
        choice = nearest_exit(fields, st.position, agent.profile.known_exits)
    if st.objective_exit is not None and choice != st.objective_exit:
        st.objective_changes += 1
    st.objective_exit = choice
    st.last_deliberation_tick = tick
    st.deliberations += 1
    return choice


# ---------------------------------------------------------------- control loop

def _pick(rng, options):
    return options[0] if len(options) == 1 else options[rng.randrange(len(options))]


def choose_target(agent: Agent, world, field) -> Optional[int]:
    """Movement policy toward the objective: flat index of the nominated cell."""
    width = world.grid.width
    r, c = agent.state.position
    idx = r * width + c
    vals = field.values
    here = vals[idx]
    occ = world.occupancy
    enter = world.enterable
    free_best, free_opts = math.inf, []
    occ_best, occ_opts = math.inf, []
    for q in world.neighbors[idx]:
        d = vals[q]
        if d >= here or not enter[q]:
            continue
        if occ[q] == NO_AGENT:
            if d < free_best:
                free_best, free_opts = d, [q]
            elif d == free_best:
                free_opts.append(q)
        else:
            if d < occ_best:
                occ_best, occ_opts = d, [q]
            elif d == occ_best:
                occ_opts.append(q)
    if free_opts:
        return _pick(world.rng, free_opts)
    if agent.state.blocked_steps >= world.behavior_params.prudential_limit:
        lat_best, lat_opts = math.inf, []
        for q in world.neighbors[idx]:
            if occ[q] != NO_AGENT or not enter[q]:
                continue
            d = vals[q]
            if d < lat_best:
                lat_best, lat_opts = d, [q]
            elif d == lat_best:
                lat_opts.append(q)
        if lat_opts:
            return _pick(world.rng, lat_opts)
    if occ_opts:
        return _pick(world.rng, occ_opts)
    return None


def _update_stress(agent: Agent, world) -> None:
    st = agent.state
    idx = world.grid.flat(st.position)
    near_hazard = world.hazard_flat[idx] or any(world.hazard_flat[q] for q in world.neighbors[idx])
    if st.blocked_steps > 0 or near_hazard or st.trapped:
        st.stress += 1
    if not st.stress_alarm and st.stress > agent.profile.stress_tolerance:
        st.stress_alarm = True
        agent.behavior.fire(STRESS_EXCEEDS_TOLERANCE, world.rng)


def control_step(agent: Agent, world, fields: dict, tick: int) -> Optional[MoveIntent]:
    """One pass of the agent loop; returns the nominated move or None."""
    if not agent.active:
        raise ValueError(f"agent {agent.id} already evacuated")
    st = agent.state
    params = world.behavior_params
    percept = Percept(world, agent)
    idx = world.grid.flat(st.position)

    objective = st.objective_exit
    infeasible = objective is not None and (
        objective not in fields or not math.isfinite(fields[objective].values[idx])
    )
    if infeasible:
        agent.behavior.fire(OBJECTIVE_INFEASIBLE, world.rng)
    if (
        objective is None
        or infeasible
        or (
            reconsider_allowed(agent, tick, params)
            and (agent.behavior.current == BPE or percept.sees_new_hazard)
        )
    ):
        deliberate(agent, percept, fields, tick)

    intent = None
    st.trapped = st.objective_exit is None
    if not st.trapped:
        target = choose_target(agent, world, fields[st.objective_exit])
        if target is None and st.objective_exit is not None:
            # plan no longer reasonable from here: re-plan on the current fields
            deliberate(agent, percept, fields, tick)
            if st.objective_exit is not None:
                target = choose_target(agent, world, fields[st.objective_exit])
        if target is not None:
            intent = MoveIntent(agent.id, st.position, world.grid.pos(target))
    _update_stress(agent, world)
    return intent
