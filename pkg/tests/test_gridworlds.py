import numpy as np
import pytest

from powermdp.errors import InputError
from powermdp.gridworlds import (ACTIONS, GAMMA, HORIZON, NOOP, build_gridworld, ground_truth_dists,
                                 ground_truth_vector)
from powermdp.mdp import policy_iteration


@pytest.fixture(scope="module", params=["options", "damage"])
def env(request):
    return build_gridworld(request.param)


def test_shared_constants():
    assert ACTIONS == ("up", "left", "right", "down", "noop")
    assert ACTIONS[NOOP] == "noop"
    assert HORIZON == 20
    assert GAMMA == 0.996


def test_state_counts():
    assert build_gridworld("options").mdp.n_states == 60
    assert build_gridworld("damage").mdp.n_states == 32


def test_transitions_are_deterministic(env):
    T = env.mdp.T
    assert np.all(T.max(axis=2) == 1.0)
    assert np.allclose(T.sum(axis=2), 1.0)
    for s in range(env.mdp.n_states):
        for a in range(len(ACTIONS)):
            assert T[s, a, env.step(s, a)] == 1.0


def test_side_effect_latch_is_permanent(env):
    flagged = np.flatnonzero(env.side_effect_mask)
    assert len(flagged) > 0
    assert env.side_effect_mask[env.successor[flagged]].all()
    assert not env.side_effect_mask[env.start]


def test_options_latch_is_a_cornered_box():
    env = build_gridworld("options")
    walls = {(r, c) for r, row in enumerate(env.layout) for c, ch in enumerate(row) if ch == "#"}
    for (agent, box), side in zip(env.configs, env.side_effect_mask):
        blocked_v = (box[0] - 1, box[1]) in walls or (box[0] + 1, box[1]) in walls
        blocked_h = (box[0], box[1] - 1) in walls or (box[0], box[1] + 1) in walls
        assert side == (blocked_v and blocked_h)


def test_damage_human_alternates_and_collisions_latch():
    env = build_gridworld("damage")
    s = env.start
    assert env.configs[s][1] == 0
    down = ACTIONS.index("down")
    nxt = env.step(s, down)
    agent, phase, latched = env.configs[nxt]
    assert agent in env.track
    assert phase == 1 and latched
    stay = env.step(s, NOOP)
    assert env.configs[stay][1] == 1 and not env.configs[stay][2]


def test_noop_keeps_agent_in_place(env):
    for s, cfg in enumerate(env.configs):
        assert env.configs[env.step(s, NOOP)][0] == cfg[0]


def test_render_marks_agent(env):
    pic = env.render(env.start).splitlines()
    assert len(pic) == len(env.layout)
    assert sum(row.count("A") for row in pic) == 1
    assert pic[0] == env.layout[0]


def test_rollout_length_and_start(env):
    path = env.rollout([NOOP] * env.mdp.n_states)
    assert len(path) == HORIZON + 1
    assert path[0] == env.start


def test_ground_truth_vector_and_dists(env):
    R = ground_truth_vector(env)
    assert set(np.unique(R)) <= {1.0, 0.0, -2.0, -1.0}
    assert np.array_equal(R == 1.0, env.goal_mask & ~env.side_effect_mask)
    dists = ground_truth_dists(env)
    assert set(dists) == {"rand", "true", "true-inv"}
    assert np.array_equal(np.asarray(dists["true-inv"].vector), -R)


def test_vanilla_optimum_cuts_corners_in_options():
    env = build_gridworld("options")
    _, pi = policy_iteration(env.mdp, env.env_reward(), GAMMA)
    path = env.rollout(pi)
    assert env.goal_mask[path[-1]]
    assert env.side_effect_mask[path].any()


def test_unknown_gridworld_raises():
    with pytest.raises(InputError):
        build_gridworld("sokoban")
