import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from lle import Action, Position, World, compute_beams, load_level, load_toy, max_score, parse_map, time_limit
from lle.mapgen import GenParams, sample_layout
from lle.world import EpisodeDoneError, InvalidActionError

N, E, S, W, STAY = Action.NORTH, Action.EAST, Action.SOUTH, Action.WEST, Action.STAY


def test_reset_level6():
    spec = load_level(6)
    world = World(spec)
    assert world.n_agents == 4
    assert world.positions == list(spec.starts)
    assert len(world.gems_remaining) == 4
    assert world.step_count == 0
    assert all(world.alive) and not any(world.arrived)


def test_reset_single_agent_without_lasers():
    world = World(parse_map("S0 . X"))
    assert compute_beams(world).beams == ()
    assert compute_beams(world).coverage == {}


def test_reset_toy_beam_reaches_first_wall():
    world = World(load_toy())
    beams = compute_beams(world)
    assert len(beams.beams) == 1
    assert beams.beams[0] == tuple(Position(2, c) for c in range(1, 6))
    assert len(world.gems_remaining) == 2
    assert world.positions == [Position(0, 2), Position(0, 4)]


def test_beam_unobstructed():
    world = World(parse_map("L0E . . . . @\nS0 X . . . .\n"))
    assert compute_beams(world).beams[0] == tuple(Position(0, c) for c in range(1, 5))


def test_beam_matching_agent_blocks_and_is_included():
    world = World(parse_map("L0E . . S0 . @\nS1 X X . . .\n"))
    beams = compute_beams(world)
    assert beams.beams[0] == tuple(Position(0, c) for c in range(1, 4))
    assert beams.blockers == (0,)


def test_beam_passes_through_other_colors():
    world = World(parse_map("L0E . . S1 . @\nS0 X X . . .\n"))
    beams = compute_beams(world)
    assert beams.beams[0] == tuple(Position(0, c) for c in range(1, 5))
    assert beams.blockers == (None,)
    assert Position(0, 3) in beams.coverage


def test_available_in_pocket_is_stay_only():
    world = World(parse_map("@ @ @\n@ S0 @\n@ @ X\n"))
    assert world.available_actions() == [[STAY]]


def test_available_on_exit_is_stay_only():
    world = World(parse_map("S0 X .\n"))
    world.step([E])
    assert world.arrived == [True]
    assert world.available_actions() == [[STAY]]


def test_adjacent_agents_cannot_enter_each_other():
    world = World(parse_map("S0 S1\nX X\n"))
    avail = world.available_actions()
    assert E not in avail[0]
    assert W not in avail[1]
    assert S in avail[0] and S in avail[1]


def test_sources_and_walls_are_not_enterable():
    world = World(parse_map("L0S S0 @\n. . .\nX . X\n"))
    assert set(world.available_actions()[0]) == {S, STAY}


def test_last_exit_pays_exit_and_finish():
    world = World(parse_map("S0 X . X S1\n"))
    out = world.step([E, STAY])
    assert out.reward == 1.0 and not out.episode_done
    out = world.step([STAY, W])
    assert out.reward == 2.0
    assert out.episode_done and world.done


def test_all_stay_is_zero():
    world = World(load_level(6))
    out = world.step([STAY] * 4)
    assert out.reward == 0.0 and not out.episode_done


def test_releasing_a_beam_kills_the_crossing_agent():
    world = World(parse_map(". . . . . .\nL0E S0 . S1 . @\nX X . . . .\n"))
    assert world.alive == [True, True]
    out = world.step([S, STAY])
    assert out.deaths == {1}
    assert out.reward == -1.0
    assert out.episode_done
    assert world.alive == [True, False]
    with pytest.raises(EpisodeDoneError):
        world.step([STAY, STAY])


def test_vertex_conflict_turns_both_moves_into_stay():
    world = World(parse_map("S0 . S1\nX . X\n"))
    out = world.step([E, W])
    assert world.positions == [Position(0, 0), Position(0, 2)]
    assert out.reward == 0.0


def test_unavailable_action_names_the_agent():
    world = World(parse_map("S0 @ S1\nX . X\n"))
    with pytest.raises(InvalidActionError, match="agent 0"):
        world.step([E, STAY])


def test_death_reward_replaces_gem_reward():
    # agent 1 walks onto a gem lying in agent 0's unblocked beam
    world = World(parse_map("L0E . G @\nS0 . S1 .\nX X . .\n"))
    out = world.step([STAY, N])
    assert out.reward == -1.0
    assert out.gems_collected == frozenset()


def test_two_deaths_cost_two():
    world = World(parse_map("L2E . . . @\n. S0 . S1 S2\nX X X . .\n"))
    out = world.step([N, N, STAY])
    assert out.deaths == {0, 1}
    assert out.reward == -2.0


def test_overlapping_beams_kill_on_any_other_color():
    # agent 0 stands where its own beam and agent 1's beam cross
    world = World(parse_map(". L1S .\nL0E . S0\n. . S1\nX . X\n"))
    out = world.step([STAY, STAY])
    assert out.deaths == frozenset()
    out = world.step([W, STAY])
    assert out.deaths == {0}


@pytest.mark.parametrize(
    "text, expected",
    [("S0 . X", 2), ("S0 G G X", 4)],
)
def test_max_score_small(text, expected):
    assert max_score(parse_map(text)) == expected


def test_max_score_levels():
    assert max_score(load_level(6)) == 9
    assert max_score(load_level(5)) == 10


@pytest.mark.parametrize("w, h, expected", [(13, 12, 78), (2, 2, 2), (3, 3, 5)])
def test_time_limit(w, h, expected):
    rows = [["."] * w for _ in range(h)]
    rows[0][0] = "S0"
    rows[-1][-1] = "X"
    spec = parse_map("\n".join(" ".join(r) for r in rows))
    assert time_limit(spec) == expected


def test_copy_and_state_roundtrip():
    world = World(load_level(6))
    world.step([S, S, S, S])
    other = world.copy()
    out_a = world.step([STAY, S, STAY, STAY])
    out_b = other.step([STAY, S, STAY, STAY])
    assert world.get_state() == other.get_state()
    assert out_a == out_b


def _random_world(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    params = GenParams(
        width=int(rng.integers(4, 7)),
        height=int(rng.integers(4, 7)),
        n_agents=n,
        n_gems=int(rng.integers(0, 3)),
        n_lasers=int(rng.integers(0, 4)),
        wall_density=float(rng.uniform(0, 0.3)),
    )
    return World(sample_layout(params, rng)), rng


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_engine_matches_reference_model(seed):
    world, rng = _random_world(seed)
    spec = world.map
    for _ in range(40):
        if world.done:
            world.reset()
        positions = [tuple(p) for p in world.positions]
        avail = world.available_actions()
        for i in range(world.n_agents):
            assert set(avail[i]) == reference.available(spec, positions, i)
        actions = [int(rng.choice(a)) for a in avail]
        gems = {tuple(g) for g in world.gems_remaining}
        new, reward, deaths, new_gems, done = reference.step(spec, positions, gems, actions)
        out = world.step(actions)
        assert [tuple(p) for p in world.positions] == new
        assert out.reward == reward
        assert set(out.deaths) == deaths
        assert out.episode_done == done
        if not deaths:
            assert {tuple(g) for g in world.gems_remaining} == new_gems
        ref_beams = reference.beams(spec, new, world.alive)
        assert [list(map(tuple, b)) for b in compute_beams(world).beams] == [b for _, b in ref_beams]
