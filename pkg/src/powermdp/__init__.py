"""Tools for POWER, optimality probability and side-effect regularization in finite MDPs."""
from importlib import resources

from .errors import DomainError, InputError, PowerMdpError, SizeCapError
from .mdp import (RewardlessMdp, eps_optimal_actions, evaluate_policy, load_mdp,
                  optimal_actions, optimal_q, optimal_value, policy_matrix, transfer_reward)

__all__ = [
    "DomainError", "InputError", "PowerMdpError", "SizeCapError", "RewardlessMdp",
    "eps_optimal_actions", "evaluate_policy", "load_mdp", "optimal_actions", "optimal_q",
    "optimal_value", "policy_matrix", "transfer_reward", "figure_path", "load_figure",
]


def figure_path(name: str):
    """Path of a bundled example MDP, e.g. ``figure_path("case_study")``."""
    return resources.files(__name__) / "data" / f"{name}.json"


def load_figure(name: str) -> RewardlessMdp:
    path = figure_path(name)
    if not path.is_file():
        raise InputError(f"no bundled MDP named {name!r}")
    return load_mdp(path)
