import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import chain_mdp, random_cases
from powermdp.delayed import (CorrectionTable, DelayedSpecGame, Geometric, assist_alternate_reward,
                              assist_optimal_actions, assist_policy_values, delayed_spec_score,
                              delayed_spec_scores, enumeration_maximum, expected_switch_value,
                              expected_switch_values, solve_delayed_geometric,
                              state_distributions, switch_value_decomposition)
from powermdp.dists import Degenerate, Iid, Mixture, Uniform
from powermdp.errors import DomainError, InputError
from powermdp.mdp import (enumerate_policies, evaluate_policy, optimal_actions, optimal_value,
                          policy_iteration)


def two_atom_spec(d, rng):
    a, b = rng.random(d), rng.random(d)
    return Mixture((0.3, 0.7), (Degenerate(tuple(a)), Degenerate(tuple(b))))


def test_geometric_pmf_and_tail():
    g = Geometric(0.25)
    t = np.arange(0, 200)
    w = g.pmf(t)
    assert w[0] == 0.0
    assert w[1] == pytest.approx(0.25)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(t * w) == pytest.approx(4.0, abs=1e-9)
    N = g.horizon(10.0, 1e-10)
    assert g.tail(N) * 10.0 <= 1e-10
    assert g.tail(N - 1) * 10.0 > 1e-10
    assert Geometric.from_mean(5.0).p == pytest.approx(0.2)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_geometric_rejects_bad_p(bad):
    with pytest.raises(InputError):
        Geometric(bad)


def test_correction_table_validation():
    with pytest.raises(InputError):
        CorrectionTable((0.5, 0.4))
    with pytest.raises(InputError):
        CorrectionTable((1.2, -0.2))
    table = CorrectionTable((0.0, 0.5, 0.5))
    assert table.horizon() == 2
    assert table.pmf(np.array([0, 1, 2, 3])).tolist() == [0.0, 0.5, 0.5, 0.0]


def test_game_rejects_undiscounted_and_bad_correction(chain):
    spec = Iid(Uniform())
    with pytest.raises(DomainError):
        DelayedSpecGame(chain, spec, 1.0, Geometric(0.5))
    with pytest.raises(InputError):
        DelayedSpecGame(chain, spec, 0.9, 0.5)


def test_state_distributions_chain(chain):
    mu = state_distributions(chain, [0, 0, 0], "s0", 3)
    assert mu.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1]]


def test_immediate_correction_makes_every_prefix_tie():
    for mdp, rng in random_cases(10, 1):
        game = DelayedSpecGame(mdp, two_atom_spec(mdp.n_states, rng), 0.8, CorrectionTable((1.0,)))
        _, values = enumeration_maximum(game, 0)
        assert np.ptp(values) <= 1e-12
        assert values[0] == pytest.approx((1 - 0.8) * game.v_avg[0], abs=1e-12)


def test_constant_reward_makes_every_prefix_tie():
    for mdp, rng in random_cases(10, 2):
        spec = Degenerate(tuple(np.full(mdp.n_states, 0.4)))
        game = DelayedSpecGame(mdp, spec, 0.9, Geometric(0.3))
        _, values = enumeration_maximum(game, 0)
        assert np.ptp(values) <= 1e-12
        assert values[0] == pytest.approx(0.4, abs=1e-10)


def test_degenerate_spec_with_optimal_prefix_scores_optimal_value():
    for mdp, rng in random_cases(20, 3):
        R = rng.random(mdp.n_states)
        game = DelayedSpecGame(mdp, Degenerate(tuple(R)), 0.85, Geometric(0.2))
        _, pi = policy_iteration(mdp, R, 0.85)
        want = (1 - 0.85) * optimal_value(mdp, R, 0.85)[0]
        assert expected_switch_value(game, pi, 0) == pytest.approx(want, abs=1e-10)


def test_geometric_solution_matches_surrogate_reward_identity():
    # (1 - p) * ESV / (1 - gamma) = V^pi_{R'}(s0; (1-p) gamma) - p * Vavg(s0)
    for mdp, rng in random_cases(30, 4):
        p, gamma = float(rng.uniform(0.05, 0.9)), float(rng.uniform(0.3, 0.95))
        game = DelayedSpecGame(mdp, two_atom_spec(mdp.n_states, rng), gamma, Geometric(p))
        pi = rng.integers(mdp.n_actions, size=mdp.n_states)
        lhs = (1 - p) * expected_switch_value(game, pi, 0) / (1 - gamma)
        rhs = evaluate_policy(mdp, pi, game.surrogate_reward, game.gamma_aup)[0] - p * game.v_avg[0]
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_half_correction_rate_gives_unit_coefficient(chain):
    reward = assist_alternate_reward(chain, Iid(Uniform()), 0.5, 0.9, [1, 1, 1], 0, n=200)
    assert reward.coefficient == 1.0
    assert reward.gamma_aup == pytest.approx(0.45)


def test_decomposition_two_routes_agree():
    for mdp, rng in random_cases(30, 5):
        w = rng.random(5)
        game = DelayedSpecGame(mdp, two_atom_spec(mdp.n_states, rng), 0.7,
                               CorrectionTable(tuple(w / w.sum())))
        pi = rng.integers(mdp.n_actions, size=mdp.n_states)
        parts = switch_value_decomposition(game, pi, 0)
        assert parts["direct"] == pytest.approx(parts["recombined"], abs=1e-9)
        assert parts["direct"] == pytest.approx(expected_switch_value(game, pi, 0), abs=1e-9)


def test_decomposition_needs_finite_table(chain):
    game = DelayedSpecGame(chain, Iid(Uniform()), 0.9, Geometric(0.5), n=100)
    with pytest.raises(InputError):
        switch_value_decomposition(game, [0, 0, 0], 0)


def test_solver_attains_enumeration_maximum():
    for mdp, rng in random_cases(25, 6):
        p, gamma = float(rng.uniform(0.05, 0.9)), float(rng.uniform(0.3, 0.95))
        sol = solve_delayed_geometric(mdp, two_atom_spec(mdp.n_states, rng), p, gamma)
        best, _ = enumeration_maximum(sol.game, 0)
        assert expected_switch_value(sol.game, sol.policy, 0) >= best - 1e-9


def test_assist_reward_ranks_policies_like_switch_value():
    # The baseline depends only on time, so R^A values differ from the
    # switch values by a policy-independent shift and a positive scale.
    for mdp, rng in random_cases(15, 7):
        p, gamma = 0.3, 0.8
        spec = two_atom_spec(mdp.n_states, rng)
        game = DelayedSpecGame(mdp, spec, gamma, Geometric(p))
        reward = assist_alternate_reward(mdp, spec, p, gamma, np.zeros(mdp.n_states, int), 0)
        policies = np.array(list(enumerate_policies(mdp)))
        esv = expected_switch_values(game, policies, 0)
        assist = assist_policy_values(mdp, reward, policies)
        shift = esv / (1 - gamma) - assist
        assert np.ptp(shift) <= 1e-8


def test_assist_actions_equal_surrogate_actions():
    for mdp, rng in random_cases(20, 8):
        spec = two_atom_spec(mdp.n_states, rng)
        sol = solve_delayed_geometric(mdp, spec, 0.4, 0.9)
        reward = assist_alternate_reward(mdp, spec, 0.4, 0.9, sol.policy, 0)
        want = optimal_actions(mdp, sol.surrogate_reward, sol.gamma_aup)
        assert assist_optimal_actions(mdp, reward) == tuple(frozenset(a) for a in want.actions)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 6))
def test_scores_at_zero_correction_are_optimal_values(seed, t):
    rng = np.random.default_rng(seed)
    mdp = chain_mdp()
    R = rng.random((4, 3))
    V = np.stack([optimal_value(mdp, r, 0.9) for r in R])
    pi = rng.integers(2, size=3)
    zero = delayed_spec_scores(mdp, pi, (R, V), 0.9, 0, 0)
    assert np.allclose(zero, V[:, 0])
    later = delayed_spec_scores(mdp, pi, (R, V), 0.9, t, 0)
    assert np.all(later <= V[:, 0] + 1e-9)


def test_delayed_spec_score_exact_and_sampled(chain):
    R = (0.0, 0.0, 1.0)
    exact = delayed_spec_score(chain, [0, 0, 0], Degenerate(R), 0.9, t_correct=3)
    assert exact.radius == 0.0
    assert exact.estimate == pytest.approx(optimal_value(chain, R, 0.9)[0])
    sampled = delayed_spec_score(chain, [1, 1, 1], Iid(Uniform()), 0.9, t_correct=2, n=500, seed=4)
    assert sampled.radius > 0
    assert sampled.n == 500
    with pytest.raises(DomainError):
        delayed_spec_score(chain, [0, 0, 0], Degenerate(R), 1.0)
    with pytest.raises(InputError):
        delayed_spec_scores(chain, [0, 0, 0], (np.zeros((1, 3)), np.zeros((1, 3))), 0.9, -1)
