import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evacsim.behavior import AgentProfile, MoveIntent, make_agent
from evacsim.grid import MOORE_OFFSETS, NO_AGENT, ExitSpec, Grid
from evacsim.movement import IntentError, apply, resolve


def _world(positions, speeds=None, damage=None, size=8, exit_cells=((7, 3),)):
    grid = Grid.room(size, size)
    grid.add_exit(ExitSpec(1, exit_cells))
    agents = {}
    for aid, pos in enumerate(positions):
        prof = AgentProfile(aid, speed=(speeds or {}).get(aid, 1), damage_points=(damage or {}).get(aid, 0))
        agents[aid] = make_agent(prof, pos)
        grid.occupant[pos] = aid
    profiles = {aid: a.profile for aid, a in agents.items()}
    return grid, agents, profiles


def test_speed_priority():
    grid, agents, profiles = _world([(2, 2), (2, 4)], speeds={0: 3, 1: 1})
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 4), (2, 3))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.moved == {0: (2, 3)} and out.stalled == {1}


def test_damage_breaks_speed_tie():
    grid, agents, profiles = _world([(2, 2), (2, 4)], damage={0: 2, 1: 0})
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 4), (2, 3))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.moved == {1: (2, 3)}


def test_equal_contest_is_fair():
    grid, agents, profiles = _world([(2, 2), (2, 4)])
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 4), (2, 3))]
    rng = random.Random(2024)
    n = 10_000
    wins = sum(0 in resolve(intents, grid, profiles, rng).moved for _ in range(n))
    sigma = (n * 0.25) ** 0.5
    assert abs(wins - n / 2) <= 3 * sigma


def test_chain_moves_both():
    grid, agents, profiles = _world([(2, 2), (2, 3)])
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 3), (2, 4))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.moved == {0: (2, 3), 1: (2, 4)} and not out.stalled


def test_chain_stall_cascades():
    # 1 loses its contest to the faster 2, so 0 waiting on 1's cell stalls too
    grid, agents, profiles = _world([(2, 2), (2, 3), (1, 5)], speeds={2: 2})
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 3), (2, 4)),
               MoveIntent(2, (1, 5), (2, 4))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.moved == {2: (2, 4)} and out.stalled == {0, 1}


def test_target_occupied_by_idle_agent_stalls():
    grid, agents, profiles = _world([(2, 2), (2, 3)])
    out = resolve([MoveIntent(0, (2, 2), (2, 3))], grid, profiles, random.Random(0))
    assert out.stalled == {0}


def test_two_cycle_stalls():
    grid, agents, profiles = _world([(2, 2), (2, 3)])
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 3), (2, 2))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.stalled == {0, 1} and not out.moved


def test_three_cycle_with_tail_stalls():
    grid, agents, profiles = _world([(2, 2), (2, 3), (3, 3), (1, 1)])
    intents = [MoveIntent(0, (2, 2), (2, 3)), MoveIntent(1, (2, 3), (3, 3)),
               MoveIntent(2, (3, 3), (2, 2)), MoveIntent(3, (1, 1), (2, 2))]
    out = resolve(intents, grid, profiles, random.Random(0))
    assert out.stalled == {0, 1, 2, 3}


def test_exit_arrival_evacuates():
    grid, agents, profiles = _world([(6, 3)])
    out = resolve([MoveIntent(0, (6, 3), (7, 3))], grid, profiles, random.Random(0))
    assert out.evacuated == {0: (7, 3)}
    apply(out, grid, agents, tick=5)
    assert grid.occupant[6, 3] == NO_AGENT and grid.occupant[7, 3] == NO_AGENT
    st_ = agents[0].state
    assert st_.evacuated_at == 5 and st_.exit_used == 1 and st_.distance_moves == 1


def test_apply_stalled_counts_blocked():
    grid, agents, profiles = _world([(2, 2), (2, 3)])
    out = resolve([MoveIntent(0, (2, 2), (2, 3))], grid, profiles, random.Random(0))
    apply(out, grid, agents, tick=1)
    assert agents[0].state.position == (2, 2) and agents[0].state.blocked_steps == 1


def test_apply_move_resets_blocked():
    grid, agents, profiles = _world([(2, 2)])
    agents[0].state.blocked_steps = 4
    out = resolve([MoveIntent(0, (2, 2), (3, 3))], grid, profiles, random.Random(0))
    apply(out, grid, agents, tick=1)
    assert agents[0].state.blocked_steps == 0
    assert grid.occupant[3, 3] == 0 and grid.occupant[2, 2] == NO_AGENT


@pytest.mark.parametrize("intent", [
    MoveIntent(0, (2, 2), (2, 4)),        # not a Moore step
    MoveIntent(0, (2, 2), (1, 1)),        # fine cell, then made a wall below
    MoveIntent(0, (3, 3), (3, 4)),        # agent not there
])
def test_bad_intents_rejected(intent):
    grid, agents, profiles = _world([(2, 2)])
    grid.structure[1, 1] = 1
    with pytest.raises(IntentError):
        resolve([intent], grid, profiles, random.Random(0))


def test_fire_and_heat_targets_rejected():
    grid, agents, profiles = _world([(2, 2)])
    grid.fire[2, 3] = 1
    with pytest.raises(IntentError):
        resolve([MoveIntent(0, (2, 2), (2, 3))], grid, profiles, random.Random(0))
    heat = np.zeros(grid.shape, dtype=bool)
    heat[3, 3] = True
    with pytest.raises(IntentError):
        resolve([MoveIntent(0, (2, 2), (3, 3))], grid, profiles, random.Random(0), blocked=heat)


def test_duplicate_intent_rejected():
    grid, agents, profiles = _world([(2, 2)])
    with pytest.raises(IntentError):
        resolve([MoveIntent(0, (2, 2), (2, 3))] * 2, grid, profiles, random.Random(0))


@st.composite
def crowds(draw):
    size = 9
    cells = [(r, c) for r in range(1, size - 1) for c in range(1, size - 1)]
    n = draw(st.integers(1, 25))
    picks = draw(st.permutations(cells))[:n]
    moves = draw(st.lists(st.sampled_from(MOORE_OFFSETS), min_size=n, max_size=n))
    speeds = draw(st.lists(st.integers(1, 3), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**31))
    return size, picks, moves, speeds, seed


@settings(max_examples=150, deadline=None)
@given(crowds())
def test_resolution_invariants(case):
    size, picks, moves, speeds, seed = case
    grid, agents, profiles = _world(picks, speeds=dict(enumerate(speeds)), size=size,
                                    exit_cells=((size - 1, 3), (size - 1, 4)))
    intents = []
    for aid, (pos, (dr, dc)) in enumerate(zip(picks, moves)):
        tgt = (pos[0] + dr, pos[1] + dc)
        if grid.walkable[tgt]:
            intents.append(MoveIntent(aid, pos, tgt))
    out = resolve(intents, grid, profiles, random.Random(seed))
    again = resolve(intents, grid, profiles, random.Random(seed))
    assert (out.moved, out.stalled, out.evacuated) == (again.moved, again.stalled, again.evacuated)

    ids = {it.agent_id for it in intents}
    done = set(out.moved) | set(out.evacuated)
    assert not (done & out.stalled) and done | out.stalled == ids
    assert not (set(out.moved) & set(out.evacuated))
    assert len(out.evacuated) <= 2

    before = {aid: a.state.position for aid, a in agents.items()}
    apply(out, grid, agents, tick=1)
    on_grid = [a for a in agents.values() if a.active]
    assert len(on_grid) + len(out.evacuated) == len(picks)
    positions = [a.state.position for a in on_grid]
    assert len(set(positions)) == len(positions)
    assert int((grid.occupant != NO_AGENT).sum()) == len(on_grid)
    for a in on_grid:
        assert grid.occupant[a.state.position] == a.id
        p, q = before[a.id], a.state.position
        assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) <= 1
