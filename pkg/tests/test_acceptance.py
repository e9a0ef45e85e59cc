"""The thirteen acceptance criteria at their stated tolerances.

Each test records one pass/fail line, collected under "acceptance criteria"
in the terminal summary. Criterion 4 asks for a published value that the
stated construction does not produce; it is computed faithfully and marked
as a strict expected failure (see the decisions ledger).
"""
import math
import time

import numpy as np
import pytest

import test_mdp
import test_power
import test_visits
from conftest import random_cases
from powermdp import load_figure
from powermdp.delayed import (assist_alternate_reward, assist_optimal_actions, assist_policy_values,
                              enumeration_maximum, expected_switch_value, solve_delayed_geometric)
from powermdp.dists import Degenerate, Mixture, parse_spec
from powermdp.experiments import ExperimentConfig, mean_residual, run_experiment
from powermdp.figures import (BOLTZMANN_A, BOLTZMANN_B, CARD_COLUMNS, SATISFICE_A, SATISFICE_B)
from powermdp.gridworlds import GAMMA, build_gridworld
from powermdp.mdp import enumerate_policies, optimal_actions, policy_iteration
from powermdp.power import ActionTarget, optimality_probability, power, power_states
from powermdp.regret import SwitchPolicy, no_free_lunch_check, proportional_regret
from powermdp.retarget import (Argmax, BanditConfig, Boltzmann, Satisfice, bandit_problem,
                               bandit_rule, bandit_train_prob, cards_problem, decision_prob,
                               orbit_tendency_check, train_lower_bound)

N = 10 ** 6
U = "uniform01"


def _spec(text, mdp):
    return parse_spec(text, mdp.n_states)


def test_criterion_01_case_study_power(acceptance):
    m = load_figure("case_study")
    start = time.perf_counter()
    worst = 0.0
    for g in (0.1, 0.5, 0.9):
        ests = power_states(m, ["empty", "r_se", "l_sw"], g, _spec(U, m), N, 0)
        want = (0.5, 2 / 3, (2 / 3 + g / 2) / (1 + g))
        worst = max(worst, *(abs(e.estimate - w) for e, w in zip(ests, want)))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.005 and elapsed < 60
    acceptance(1, ok, f"case-study POWER max |error| {worst:.5f} <= 0.005, {elapsed:.1f} s < 60 s")
    assert ok


def test_criterion_02_power_not_ic(acceptance):
    m = load_figure("power_not_ic")
    exact = [power(m, s, 1, _spec(U, m), N, 0) for s in ("s2", "s3")]
    exact_ok = (exact[0].estimate == 0.75 and exact[1].estimate == 2 / 3
                and all(e.radius == 0 and e.notes.get("exact") for e in exact))
    probs = [optimality_probability(m, "s1", ActionTarget(a), 1, _spec(U, m), N, 0) for a in ("N", "NE")]
    errs = [abs(probs[0].estimate - 1 / 3), abs(probs[1].estimate - 2 / 3)]
    ok = exact_ok and max(errs) <= 0.005
    acceptance(2, ok, f"POWER(s2,1)={exact[0].estimate}, POWER(s3,1)={exact[1].estimate:.6f} exact; "
                      f"P(s1,N)={probs[0].estimate:.4f}, P(s1,NE)={probs[1].estimate:.4f}")
    assert ok


def test_criterion_03_opt_prob_half_prob(acceptance):
    m = load_figure("opt_prob_half_prob")
    e = optimality_probability(m, "s", ActionTarget("right"), 1, _spec(U, m), N, 0)
    ok = abs(e.estimate - 0.4) <= 0.005
    acceptance(3, ok, f"P(s,right,1)={e.estimate:.4f}, target 0.400 +- 0.005")
    assert ok


@pytest.mark.xfail(strict=True, reason="CDF x^2 gives 1/2 + g(1-g)/9 = 0.52778 at g = 0.5; "
                                       "the published 0.5375 is the CDF x^3 value")
def test_criterion_04_impossibility_graphical(acceptance):
    m = load_figure("impossibility_graphical")
    e = optimality_probability(m, "s1", ActionTarget("up"), 0.5, _spec("cdfpow:2", m), N, 0)
    ok = abs(e.estimate - 0.5375) <= 0.005
    exact = 0.5 + 0.5 * 0.5 / 9
    acceptance(4, ok, f"P(s1,up,0.5)={e.estimate:.4f} +- {e.radius:.4f}, target 0.5375 +- 0.005; "
                      f"exact value under CDF x^2 is {exact:.5f} (known conflict, xfail)")
    assert ok


def test_criterion_05_power_calc(acceptance):
    m = load_figure("power_calc")
    spec = _spec("prod:uniform01,uniform01,cdfpow:2,uniform01", m)
    ests = [power(m, "s0", g, spec, N, 0).estimate for g in (0.3, 0.7)]
    ok = all(abs(e - 0.8) <= 0.005 for e in ests)
    acceptance(5, ok, f"POWER(s0,0.3)={ests[0]:.4f}, POWER(s0,0.7)={ests[1]:.4f}, target 0.800")
    assert ok


def test_criterion_06_uniform_formula(acceptance):
    m = load_figure("uniform")
    errs = []
    for g in (0.1, 0.5, 0.9):
        want = (1 - g) * (2 / 3 + 3 * g / 4) + g ** 2 / 2
        errs.append(abs(power(m, "s1", g, _spec(U, m), N, 0).estimate - want))
    ok = max(errs) <= 0.005
    acceptance(6, ok, f"POWER(s1,g) max |error| {max(errs):.5f} <= 0.005")
    assert ok


def test_criterion_07_boltzmann_table(acceptance):
    problem = cards_problem()
    got, want = [], []
    for col, u in enumerate(CARD_COLUMNS):
        got += [round(decision_prob(Boltzmann(1.0), problem.B, problem, u), 3),
                round(decision_prob(Boltzmann(1.0), problem.A, problem, u), 3)]
        want += [BOLTZMANN_B[col], BOLTZMANN_A[col]]
    ok = len(got) == 12 and got == want
    acceptance(7, ok, f"{sum(a == b for a, b in zip(got, want))}/12 Boltzmann entries match to 3 decimals")
    assert ok


def test_criterion_08_orbit_tally_and_satisficer(acceptance):
    problem = cards_problem()
    report = orbit_tendency_check(Argmax(), problem, (10, 5, 0), n=2)
    tally_ok = report.count_b == 4 and report.count_a == 2 and report.holds
    sat = [(decision_prob(Satisfice(3.0), problem.B, problem, u),
            decision_prob(Satisfice(3.0), problem.A, problem, u)) for u in CARD_COLUMNS]
    sat_ok = sat == list(zip(SATISFICE_B, SATISFICE_A))
    ok = tally_ok and sat_ok
    acceptance(8, ok, f"orbit tally {report.count_b} vs {report.count_a}, ratio-2 verdict "
                      f"{report.holds}; satisficer table exact: {sat_ok}")
    assert ok


def _atoms_spec(d, rng, k=3):
    w = rng.random(k)
    return Mixture(tuple(w / w.sum()), tuple(Degenerate(tuple(rng.random(d))) for _ in range(k)))


def test_criterion_09_delayed_spec_oracle(acceptance):
    worst_gap, same_sets, ranked = 0.0, 0, 0
    cases = list(random_cases(50, 2024))
    for mdp, rng in cases:
        p, gamma = float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.2, 0.95))
        spec = _atoms_spec(mdp.n_states, rng)
        sol = solve_delayed_geometric(mdp, spec, p, gamma)
        best, _ = enumeration_maximum(sol.game, 0)
        worst_gap = max(worst_gap, best - expected_switch_value(sol.game, sol.policy, 0))
        reward = assist_alternate_reward(mdp, spec, p, gamma, sol.policy, 0)
        want = optimal_actions(mdp, sol.surrogate_reward, sol.gamma_aup).actions
        same_sets += assist_optimal_actions(mdp, reward) == tuple(frozenset(a) for a in want)
        # second route: the policy maximizing the explicit time-indexed R^A sum
        policies = np.array(list(enumerate_policies(mdp)))
        top = policies[np.argmax(assist_policy_values(mdp, reward, policies))]
        ranked += expected_switch_value(sol.game, top, 0) >= best - 1e-9
    ok = worst_gap <= 1e-9 and same_sets == len(cases) and ranked == len(cases)
    acceptance(9, ok, f"max gap to enumeration {worst_gap:.2e} <= 1e-9 on {len(cases)} MDPs; "
                      f"assist action sets identical {same_sets}/{len(cases)}")
    assert ok


def test_criterion_10_no_free_lunch_and_sharp_bound(acceptance):
    checked, worst = 0, 1.0
    for mdp, rng in random_cases(400, 10):
        R = rng.normal(size=mdp.n_states)
        gamma = float(rng.choice([0.0, 0.5, 0.9, 1.0]))
        pi = rng.integers(mdp.n_actions, size=mdp.n_states)
        check = no_free_lunch_check(mdp, pi, R, 0, gamma)
        if not check.nondegenerate:
            continue
        worst = min(worst, check.worst)
        checked += 1
        if checked == 100:
            break
    m = load_figure("sharp_bound")
    sharp = [proportional_regret(m, SwitchPolicy((1, 0, 0), 1), (0.0, 0.5, 1.0), "s1", g).pregret
             for g in (0.25, 0.5, 0.75)]
    sharp_err = max(abs(r - (1 - g ** 2)) for r, g in zip(sharp, (0.25, 0.5, 0.75)))
    ok = checked == 100 and worst >= 0.5 - 1e-9 and sharp_err <= 1e-12
    acceptance(10, ok, f"min worst-case pregret {worst:.4f} >= 0.5 on {checked} cases; "
                       f"sharp bound max |error| {sharp_err:.1e}")
    assert ok


def test_criterion_11_gridworlds(acceptance):
    config = ExperimentConfig(lam=0.01, n_aux=20, gamma=GAMMA)
    env = build_gridworld("options")
    _, pi = policy_iteration(env.mdp, env.env_reward(), GAMMA)
    vanilla_latch = bool(env.side_effect_mask[env.rollout(pi)].any())
    details, ok = [f"vanilla optimum latches in options: {vanilla_latch}"], vanilla_latch
    for name in ("options", "damage"):
        rows, outcomes = run_experiment(name, range(5), config)
        clean = sum(o.reached_goal and not o.side_effect for o in outcomes if o.condition == "aup")
        true_res, inv_res = mean_residual(rows, "true"), mean_residual(rows, "true-inv")
        ratio = abs(inv_res) / abs(true_res)
        ok = ok and clean >= 4 and true_res > 0 and ratio <= 0.10
        details.append(f"{name}: AUP clean {clean}/5, true residual {true_res:.1f}, "
                       f"|true-inv|/|true| {ratio:.3f}")
    acceptance(11, ok, "; ".join(details))
    assert ok


def test_criterion_12_bandit(acceptance):
    bound = train_lower_bound(0.1, 100)
    est = bandit_train_prob(BanditConfig((5, 4, 3, 2, 1), 0.1, 100), 10 ** 4, 0)
    prob_ok = est.probs[0] >= bound - est.radius
    report = orbit_tendency_check(bandit_rule(0.1, 100, 10 ** 4, 0), bandit_problem(),
                                  (5, 4, 3, 2, 1), n=4)
    ok = prob_ok and report.holds and report.n_elements == math.factorial(5)
    acceptance(12, ok, f"P(best arm)={est.probs[0]:.4f} >= {bound:.4f} - {est.radius:.4f}; "
                       f"orbit {report.count_b} vs {report.count_a} over {report.n_elements}, "
                       f"ratio-4 verdict {report.holds}")
    assert ok


PROPERTY_SUITES = [
    ("visit-distribution invariants", test_visits.test_visit_function_invariants, ()),
    ("POWER identity under common samples", test_power.test_power_identity_under_common_samples, ()),
    ("d_au metric axioms per sample", test_power.test_au_metric_axioms_per_sample, (0,)),
    ("optimality-probability additivity", test_power.test_additivity_over_nondominated, (0.5,)),
    ("Hoeffding coverage", test_power.test_hoeffding_coverage, ()),
    ("transfer_reward set equality", test_mdp.test_transfer_reward_round_trip_on_random_mdps, ()),
    ("eps-optimal nesting", test_mdp.test_eps_nesting, ()),
]


def test_criterion_13_property_suites(acceptance):
    failed = []
    for name, fn, args in PROPERTY_SUITES:
        try:
            fn(*args)
        except AssertionError:
            failed.append(name)
    ok = not failed
    acceptance(13, ok, f"{len(PROPERTY_SUITES) - len(failed)}/{len(PROPERTY_SUITES)} property suites "
                       f"pass" + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok
