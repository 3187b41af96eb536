"""Cell-centric conflict resolution for one tick of movement.

Agents nominate a neighbouring cell; every nominated cell then picks at most
one winner among its candidates. A request for a cell whose occupant is
itself moving away is granted only if that occupant's own move succeeds, so
chains resolve from their free end. Cycles never resolve and every member
stays put.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .grid import MOORE_OFFSETS, NO_AGENT, Grid, Structure


class IntentError(ValueError):
    pass


@dataclass
class ResolutionOutcome:
    moved: dict = field(default_factory=dict)       # agent id -> new position
    stalled: set = field(default_factory=set)
    evacuated: dict = field(default_factory=dict)   # agent id -> exit cell reached


_SOLID = (int(Structure.WALL), int(Structure.OBSTACLE))
_EXIT = int(Structure.EXIT)
_STEPS = frozenset(MOORE_OFFSETS)


def _check(intents, grid: Grid, blocked):
    seen = set()
    for it in intents:
        if it.agent_id in seen:
            raise IntentError(f"agent {it.agent_id} has more than one intent")
        seen.add(it.agent_id)
        if not (grid.in_bounds(it.origin) and grid.in_bounds(it.target)):
            raise IntentError(f"intent of agent {it.agent_id} leaves the grid")
        dr, dc = it.target[0] - it.origin[0], it.target[1] - it.origin[1]
        if (dr, dc) not in _STEPS:
            raise IntentError(f"intent of agent {it.agent_id} is not a Moore step")
        if grid.occupant[it.origin] != it.agent_id:
            raise IntentError(f"agent {it.agent_id} is not at {it.origin}")
        if int(grid.structure[it.target]) in _SOLID or grid.fire[it.target] > 0:
            raise IntentError(f"intent of agent {it.agent_id} targets a blocked cell")
        if blocked is not None and blocked[it.target]:
            raise IntentError(f"intent of agent {it.agent_id} targets a heat cell")


def _winner(candidates, profiles, rng):
    # greater speed first, then fewer damage points, then a uniform draw
    def key(aid):
        p = profiles[aid]
        return (-p.speed, p.damage_points)
    best = min(key(a) for a in candidates)
    tied = [a for a in candidates if key(a) == best]
    if len(tied) == 1:
        return tied[0]
    return tied[rng.randrange(len(tied))]


def resolve(intents, grid: Grid, profiles, rng, blocked=None) -> ResolutionOutcome:
    """Decide which intents succeed.

    ``profiles`` maps agent id to an object with ``speed`` and
    ``damage_points``; ``rng`` is a ``random.Random``; ``blocked`` is an
    optional boolean mask of cells agents may not enter (heat zone).
    """
    intents = sorted(intents, key=lambda it: it.agent_id)
    _check(intents, grid, blocked)

    by_agent = {it.agent_id: it for it in intents}
    contests = {}
    for it in intents:
        contests.setdefault(it.target, []).append(it.agent_id)
    # winners are drawn in a fixed cell order so that random tie-breaks are reproducible
    winner = {cell: _winner(contests[cell], profiles, rng) for cell in sorted(contests)}

    success = {}
    for start in by_agent:
        if start in success:
            continue
        path, on_path = [], set()
        aid = start
        verdict = None
        while True:
            if aid in success:
                verdict = success[aid]
                break
            if aid in on_path:
                # every agent from the first repeat onward sits on a cycle
                cut = path.index(aid)
                for member in path[cut:]:
                    success[member] = False
                path = path[:cut]
                verdict = False
                break
            it = by_agent[aid]
            if winner[it.target] != aid:
                success[aid] = False
                verdict = False
                break
            occ = int(grid.occupant[it.target])
            if occ == NO_AGENT:
                success[aid] = True
                verdict = True
                break
            if occ not in by_agent:
                success[aid] = False
                verdict = False
                break
            path.append(aid)
            on_path.add(aid)
            aid = occ
        for member in reversed(path):
            if member not in success:
                success[member] = verdict
    outcome = ResolutionOutcome()
    for aid, it in by_agent.items():
        if not success[aid]:
            outcome.stalled.add(aid)
        elif int(grid.structure[it.target]) == _EXIT:
            outcome.evacuated[aid] = it.target
        else:
            outcome.moved[aid] = it.target
    return outcome


def apply(outcome: ResolutionOutcome, grid: Grid, agents: dict, tick: int) -> Grid:
    """Commit a resolution: occupancy, evacuations and per-agent counters."""
    movers = list(outcome.moved.items()) + list(outcome.evacuated.items())
    for aid, _ in movers:
        grid.occupant[agents[aid].state.position] = NO_AGENT
    for aid, target in movers:
        st = agents[aid].state
        st.last_move = (st.position, target)
        st.position = target
        st.distance_moves += 1
        st.blocked_steps = 0
        if aid in outcome.evacuated:
            st.evacuated_at = tick
            st.exit_used = int(grid.exit_id[target])
        else:
            grid.occupant[target] = aid
    for aid in outcome.stalled:
        agents[aid].state.blocked_steps += 1
    return grid
