import itertools

import numpy as np
import pytest

from powermdp.mdp import RewardlessMdp, evaluate_policy, random_mdp


def chain_mdp():
    """s0 -> s1 -> s2 -> s2 with a second action that stays put."""
    T = np.zeros((3, 2, 3))
    for s in range(3):
        T[s, 0, min(s + 1, 2)] = 1.0
        T[s, 1, s] = 1.0
    return RewardlessMdp(["s0", "s1", "s2"], ["next", "stay"], T)


def brute_force_values(mdp, R, gamma):
    """Elementwise max of ``V^pi`` over every deterministic stationary policy."""
    best = np.full(mdp.n_states, -np.inf)
    for combo in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        best = np.maximum(best, evaluate_policy(mdp, np.array(combo), R, gamma))
    return best


def random_cases(n, seed, max_states=4, max_actions=3, deterministic=None):
    """``n`` seeded random MDPs with 2..max_states states and 2..max_actions actions."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        S = int(rng.integers(2, max_states + 1))
        A = int(rng.integers(2, max_actions + 1))
        det = bool(rng.integers(2)) if deterministic is None else deterministic
        yield random_mdp(S, A, rng, deterministic=det), rng


@pytest.fixture
def chain():
    return chain_mdp()


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(number, passed, detail)`` records one criterion line for the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
