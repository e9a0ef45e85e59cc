"""Command-line front end.

Every subcommand writes CSV (LF line endings) to stdout or ``--out`` and its
resolved configuration as ``# key=value`` lines to stderr. Exit codes: 0 on
success, 1 when ``figures`` sees an unexpected mismatch, 2 on input errors
(including unknown flags), 3 when an enumeration exceeds its size cap.

Every row ends with its sample count ``n`` and ``seed``; ``n`` is 0 for rows
computed exactly. Output columns per subcommand:

``power``, ``optprob``, ``au-dist``
    quantity, state, gamma, estimate, ci_radius, n, seed
``nondominated``, ``rsd``
    index, status, eps, policy, one column per state (visit distribution at
    ``--gamma`` or the RSD vector), n, seed
``orbit-vote``
    quantity, state, gamma, count_gt, count_lt, count_eq, n_elements, exact, n, seed
``copies``
    copy, image (``phi`` as the list of images of 0..d-1), cycles, n, seed
``retarget``
    utility, f_B, f_A, winner, n, seed, followed by a summary row
``bandit``
    arm, utility, estimate, ci_radius, n, seed, lower_bound
``aup-train``
    env, condition, dist, score, residual, n (training episodes), seed
``delayed-spec``
    state, action (the optimal prefix policy), value, n, seed; a final row with
    state ``esv`` holds the start state and its expected switch value
``regret``
    quantity, state, gamma, estimate, v_star, v_pi, v_min, n, seed
``figures``
    figure, quantity, value, expected, tol, status, n, seed
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import figure_path, load_figure
from .dists import Degenerate, Mixture, parse_spec, read_vector
from .errors import InputError, PowerMdpError, SizeCapError
from .mdp import as_policy, load_mdp

DEFAULT_SAMPLES = 100_000


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as exit code 2 without exiting the interpreter."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------------

def _load_mdp(text: str):
    """A file path, or the name of a bundled example with or without ``.json``."""
    path = Path(text)
    if path.is_file():
        return load_mdp(path)
    name = path.name[:-5] if path.name.endswith(".json") else path.name
    if figure_path(name).is_file():
        return load_figure(name)
    raise InputError(f"MDP file {text!r} not found and not a bundled example")


def _spec(args, mdp):
    spec = parse_spec(args.dist, mdp.n_states, [str(s) for s in mdp.states])
    finite = isinstance(spec, Degenerate) or (isinstance(spec, Mixture) and spec.finite_support)
    if getattr(args, "gamma", None) == 1 and finite:
        print("# warning: gamma = 1 with a finite-support distribution decides optimality "
              "by average optimality; Blackwell optimality may differ on ties", file=sys.stderr)
    return spec


def _states(mdp, names):
    return [str(s) for s in mdp.states] if not names else names


def _parse_policy(mdp, text: str):
    """``a1,a2,...`` (one action per state) or ``state=action`` pairs defaulting to action 0."""
    items = [x.strip() for x in text.split(",") if x.strip()]
    if items and all("=" in x for x in items):
        pi = [0] * mdp.n_states
        for item in items:
            s, a = item.split("=", 1)
            pi[mdp.state_index(s)] = mdp.action_index(a)
        return np.array(pi)
    return as_policy(mdp, [mdp.action_index(a) for a in items])


def _gamma(text: str) -> float:
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid discount {text!r}") from None
    if not 0 <= g <= 1:
        raise argparse.ArgumentTypeError("discount must lie in [0, 1]")
    return g


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _estimate_row(est, state, gamma):
    return [est.quantity, state, gamma, est.estimate, est.radius, est.n, est.seed]


ESTIMATE_HEADER = ["quantity", "state", "gamma", "estimate", "ci_radius", "n", "seed"]


# -- subcommands --------------------------------------------------------------------

def cmd_power(args):
    from .power import power_states
    mdp = _load_mdp(args.mdp)
    spec = _spec(args, mdp)
    states = _states(mdp, args.state)
    ests = power_states(mdp, states, args.gamma, spec, args.samples, args.seed, args.ci)
    return ESTIMATE_HEADER, [_estimate_row(e, s, args.gamma) for s, e in zip(states, ests)]


def cmd_optprob(args):
    from .power import ActionTarget, optimality_probability
    mdp = _load_mdp(args.mdp)
    spec = _spec(args, mdp)
    actions = args.action or [str(a) for a in mdp.actions]
    rows = []
    for s in _states(mdp, args.state):
        for a in actions:
            e = optimality_probability(mdp, s, ActionTarget(a), args.gamma, spec, args.samples,
                                       args.seed, args.ci)
            rows.append([f"optprob:{a}", s, args.gamma, e.estimate, e.radius, e.n, e.seed])
    return ESTIMATE_HEADER, rows


def _policy_label(mdp, policy):
    return " ".join(str(mdp.actions[int(a)]) for a in policy)


def _nd_rows(mdp, report, vectors, include_all, seed):
    rows = []
    for i, (member, verdict) in enumerate(zip(report.members, report.verdicts)):
        if include_all or verdict.status == "nondominated":
            rows.append([i, verdict.status, verdict.eps, _policy_label(mdp, member.policy),
                         *vectors[i], 0, seed])
    return rows


def cmd_nondominated(args):
    from .visits import enumerate_visit_functions, non_dominated
    mdp = _load_mdp(args.mdp)
    visit_set = enumerate_visit_functions(mdp, args.state[0])
    report = non_dominated(mdp, args.state[0], visit_set, args.gamma)
    header = ["index", "status", "eps", "policy", *map(str, mdp.states), "n", "seed"]
    return header, _nd_rows(mdp, report, visit_set.matrix(args.gamma), args.all, args.seed)


def cmd_rsd(args):
    from .visits import rsd_nondominated, rsd_set
    mdp = _load_mdp(args.mdp)
    rsds = rsd_set(mdp, args.state[0])
    report = rsd_nondominated(mdp, args.state[0], rsds)
    header = ["index", "status", "eps", "policy", *map(str, mdp.states), "n", "seed"]
    return header, _nd_rows(mdp, report, [d.vector for d in rsds], args.all, args.seed)


def cmd_au_dist(args):
    from .power import au_distance, au_distance_normalized
    mdp = _load_mdp(args.mdp)
    if len(args.state) != 2:
        raise InputError("au-dist needs exactly two --state values")
    spec = _spec(args, mdp)
    fn = au_distance_normalized if args.normalized or args.gamma == 1 else au_distance
    e = fn(mdp, args.state[0], args.state[1], args.gamma, spec, args.samples, args.seed, args.ci)
    return ESTIMATE_HEADER, [_estimate_row(e, "|".join(args.state), args.gamma)]


def cmd_orbit_vote(args):
    from .orbits import OptProbQuantity, PowerQuantity, orbit_vote
    mdp = _load_mdp(args.mdp)
    spec = _spec(args, mdp)
    if args.action:
        if len(args.action) != 2 or not args.state:
            raise InputError("an optimality-probability vote needs one --state and two --action")
        q = OptProbQuantity(args.state[0], args.action[0], args.action[1], args.gamma)
        label, where = f"optprob:{args.action[0]}>{args.action[1]}", args.state[0]
    else:
        if len(args.state) != 2:
            raise InputError("a POWER vote needs exactly two --state values")
        q = PowerQuantity(args.state[0], args.state[1], args.gamma)
        label, where = "power", ">".join(args.state)
    vote = orbit_vote(mdp, q, spec, exact=not args.perms, n_perms=args.perms,
                      n=args.samples, seed=args.seed)
    header = ["quantity", "state", "gamma", "count_gt", "count_lt", "count_eq", "n_elements",
              "exact", "n", "seed"]
    return header, [[label, where, args.gamma, vote.count_gt, vote.count_lt, vote.count_eq,
                     vote.n_elements, vote.exact, args.samples, args.seed]]


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _field(doc, key, path):
    if not isinstance(doc, dict) or key not in doc:
        raise InputError(f"{path}: missing field '{key}'")
    return doc[key]


def cmd_copies(args):
    from .orbits import contains_copies
    doc = _read_json(args.problem)
    B = _field(doc, "B", args.problem)
    A = _field(doc, "A", args.problem)
    witness = contains_copies(B, A, args.copies, doc.get("fixed", ()))
    rows = []
    for i, phi in enumerate(witness or ()):
        rows.append([i, " ".join(map(str, phi.perm)), phi.cycles(), 0, args.seed])
    if witness is None:
        print(f"# no {args.copies} copies found", file=sys.stderr)
    return ["copy", "image", "cycles", "n", "seed"], rows


def _rule(spec):
    from . import retarget as rt
    if isinstance(spec, str):
        name, _, arg = spec.partition(":")
        spec = {"rule": name}
        if arg:
            spec["arg"] = float(arg)
    name = spec.get("rule")
    arg = spec.get("arg")
    simple = {"argmax": rt.Argmax, "fraction-optimal": rt.FractionOptimal,
              "anti-argmax": rt.AntiArgmax, "uniform-random": rt.UniformRandom}
    if name in simple:
        return simple[name]()
    if name == "boltzmann":
        return rt.Boltzmann(float(spec.get("temperature", 1.0 if arg is None else arg)))
    if name == "satisfice":
        return rt.Satisfice(float(spec.get("threshold", arg)))
    if name == "best-of-k":
        return rt.BestOfK(int(spec.get("k", arg)))
    if name == "quantilizer":
        base = spec.get("base")
        return rt.Quantilizer(float(spec.get("q", arg)), None if base is None else tuple(base))
    if name == "stubborn":
        return rt.Stubborn(int(spec.get("index", 0 if arg is None else arg)))
    raise InputError(f"unknown decision rule {name!r}")


def cmd_retarget(args):
    from .retarget import OutcomeProblem, orbit_tendency_check
    doc = _read_json(args.problem)
    problem = OutcomeProblem(_field(doc, "vectors", args.problem), _field(doc, "A", args.problem),
                             _field(doc, "B", args.problem))
    rule_spec = args.rule or doc.get("rule", "argmax")
    try:
        rule = _rule(rule_spec)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad rule specification {rule_spec!r}: {exc}") from None
    u = args.utility or doc.get("utility")
    if u is None:
        raise InputError("retarget needs a utility vector (--utility or field 'utility')")
    report = orbit_tendency_check(rule, problem, [float(x) for x in u], args.ratio,
                                  exact=not args.perms, n_perms=args.perms, seed=args.seed)
    rows = []
    for v, fb, fa in report.rows:
        winner = "B" if fb > fa + 1e-12 else "A" if fa > fb + 1e-12 else "tie"
        rows.append([" ".join(_fmt(x) for x in v), fb, fa, winner, 0, args.seed])
    rows.append([f"count_B={report.count_b} count_A={report.count_a} tie={report.count_tie}",
                 "", "", "holds" if report.holds else "fails", 0, args.seed])
    return ["utility", "f_B", "f_A", "winner", "n", "seed"], rows


def cmd_bandit(args):
    from .retarget import BanditConfig, bandit_train_prob, train_lower_bound
    config = BanditConfig(tuple(args.utility), args.epsilon, args.trials)
    est = bandit_train_prob(config, args.samples, args.seed, args.ci)
    bound = train_lower_bound(args.epsilon, args.trials)
    top = max(config.utilities)
    unique = sum(u == top for u in config.utilities) == 1
    rows = [[i + 1, u, p, est.radius, est.sims, est.seed, bound if unique and u == top else ""]
            for i, (u, p) in enumerate(zip(config.utilities, est.probs))]
    return ["arm", "utility", "estimate", "ci_radius", "n", "seed", "lower_bound"], rows


def cmd_aup_train(args):
    from .experiments import ExperimentConfig, mean_residual, run_experiment
    config = ExperimentConfig(lam=args.lam, episodes=args.episodes, t_correct=args.t_correct,
                              dist_seed=args.seed)
    rows, outcomes = run_experiment(args.env, range(args.seeds), config)
    for o in outcomes:
        print(f"# {o.env} seed={o.seed} {o.condition}: goal={o.reached_goal} "
              f"side_effect={o.side_effect}", file=sys.stderr)
    for d in ("rand", "true", "true-inv"):
        print(f"# mean aup residual {d}: {mean_residual(rows, d)!r}", file=sys.stderr)
    return (["env", "condition", "dist", "score", "residual", "n", "seed"],
            [[r.env, r.condition, r.dist, r.score, r.residual, args.episodes, r.seed]
             for r in rows])


def cmd_delayed_spec(args):
    from .delayed import expected_switch_value, solve_delayed_geometric
    mdp = _load_mdp(args.mdp)
    if args.gamma in (0, 1):
        raise InputError("delayed-spec needs gamma in (0, 1)")
    spec = _spec(args, mdp)
    sol = solve_delayed_geometric(mdp, spec, args.p, args.gamma, args.samples, args.seed)
    s0 = args.state[0] if args.state else mdp.states[0]
    esv = expected_switch_value(sol.game, sol.policy, s0)
    n = 0 if sol.game.exact else args.samples
    rows = [[str(s), str(mdp.actions[int(a)]), "", n, args.seed]
            for s, a in zip(mdp.states, sol.policy)]
    rows.append(["esv", str(s0), esv, n, args.seed])
    return ["state", "action", "value", "n", "seed"], rows


def cmd_regret(args):
    from .regret import SwitchPolicy, proportional_regret
    mdp = _load_mdp(args.mdp)
    if args.reward is None or args.policy is None:
        raise InputError("regret needs --reward and --policy")
    R = np.array(read_vector(args.reward, [str(s) for s in mdp.states]))
    if R.shape != (mdp.n_states,):
        raise InputError(f"reward must have {mdp.n_states} entries")
    pi = _parse_policy(mdp, args.policy)
    policy = SwitchPolicy(pi, args.switch) if args.switch is not None else pi
    rows = []
    for s in _states(mdp, args.state):
        r = proportional_regret(mdp, policy, R, s, args.gamma)
        rows.append(["pregret", s, args.gamma, r.pregret, r.v_star, r.v_pi, r.v_min, 0, args.seed])
    return ["quantity", "state", "gamma", "estimate", "v_star", "v_pi", "v_min", "n", "seed"], rows


def cmd_figures(args):
    from .figures import SUITE, run_suite
    unknown = set(args.only or ()) - set(SUITE)
    if unknown:
        raise InputError(f"unknown figures {sorted(unknown)}; choose from {sorted(SUITE)}")
    checks = run_suite(args.samples, args.seed, args.only)
    rows = []
    for c in checks:
        status = "PASS" if c.passed else ("KNOWN-CONFLICT" if c.known_conflict else "FAIL")
        rows.append([c.figure, c.quantity, c.value, c.expected, c.tol, status,
                     args.samples, args.seed])
    args.failed = any(r[5] == "FAIL" for r in rows)
    return ["figure", "quantity", "value", "expected", "tol", "status", "n", "seed"], rows


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=_positive_int, default=DEFAULT_SAMPLES)
    common.add_argument("--ci", type=float, default=0.95)
    common.add_argument("--out", help="write CSV here instead of stdout")

    mdp = argparse.ArgumentParser(add_help=False)
    mdp.add_argument("--mdp", required=True, help="MDP JSON file or bundled example name")
    mdp.add_argument("--state", action="append", help="state name (repeatable)")
    mdp.add_argument("--gamma", type=_gamma, default=0.5)
    mdp.add_argument("--dist", default="uniform01", help="reward distribution spec")

    parser = _Parser(prog="powermdp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, parents, help_text):
        p = sub.add_parser(name, parents=parents, help=help_text, description=help_text)
        p.set_defaults(func=fn)
        return p

    add("power", cmd_power, [common, mdp], "POWER estimates with Hoeffding intervals")
    p = add("optprob", cmd_optprob, [common, mdp], "optimality probability of actions")
    p.add_argument("--action", action="append")
    for name, fn, text in (("nondominated", cmd_nondominated, "non-dominated visit distribution functions"),
                           ("rsd", cmd_rsd, "recurrent state distributions and their dominance")):
        p = add(name, fn, [common, mdp], text)
        p.add_argument("--all", action="store_true", help="also list dominated members")
    p = add("au-dist", cmd_au_dist, [common, mdp], "attainable utility distance between two states")
    p.add_argument("--normalized", action="store_true")
    p = add("orbit-vote", cmd_orbit_vote, [common, mdp], "orbit tally of a POWER or optimality comparison")
    p.add_argument("--action", action="append")
    p.add_argument("--perms", type=_positive_int, help="sample this many permutations")
    p = add("copies", cmd_copies, [common], "involutions witnessing copies of A inside B")
    p.add_argument("--problem", required=True, help="JSON with vector sets 'A', 'B' and optional 'fixed'")
    p.add_argument("--copies", type=_positive_int, default=1)
    p = add("retarget", cmd_retarget, [common], "orbit-level tendency of a decision rule")
    p.add_argument("--problem", required=True, help="JSON with 'vectors', 'A', 'B', optional 'rule'")
    p.add_argument("--rule", help="e.g. argmax, boltzmann:1, satisfice:3, best-of-k:2")
    p.add_argument("--utility", type=float, nargs="+")
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--perms", type=_positive_int)
    p = add("bandit", cmd_bandit, [common], "epsilon-greedy bandit exploitation probabilities")
    p.add_argument("--utility", type=float, nargs=5, required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=100)
    p = add("aup-train", cmd_aup_train, [common], "vanilla versus AUP agents on a gridworld")
    p.add_argument("--env", choices=("options", "damage"), default="options")
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--lam", type=float, default=0.01)
    p.add_argument("--episodes", type=_positive_int, default=5000)
    p.add_argument("--t-correct", type=int, default=10)
    p = add("delayed-spec", cmd_delayed_spec, [common, mdp],
            "optimal prefix policy for geometric correction times")
    p.add_argument("--p", type=float, required=True, help="per-step correction probability")
    p = add("regret", cmd_regret, [common, mdp], "proportional regret of a policy")
    p.add_argument("--reward", help="inline [r1,...] list or JSON file")
    p.add_argument("--policy", help="a1,a2,... or state=action pairs")
    p.add_argument("--switch", type=int, help="follow the policy this many steps, then act optimally")
    p = add("figures", cmd_figures, [common], "recompute pinned published values")
    p.add_argument("--only", action="append")
    return parser


def _write(header, rows, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8", newline="")
    else:
        sys.stdout.write(buf.getvalue())


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    for key, value in config.items():
        print(f"# {key}={value}", file=sys.stderr)
    try:
        header, rows = args.func(args)
        _write(header, rows, args.out)
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PowerMdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 1 if getattr(args, "failed", False) else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
