import csv
import io
import json

import numpy as np
import pytest

from powermdp.cli import run
from powermdp.mdp import RewardlessMdp, save_mdp


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_power_example_matches_closed_form(capsys):
    code, out, err = call(capsys, "power", "--mdp", "case_study.json", "--state", "r_se",
                          "--gamma", "0.5", "--dist", "uniform01", "--samples", "20000", "--seed", "0")
    assert code == 0
    (row,) = table(out)
    assert list(row) == ["quantity", "state", "gamma", "estimate", "ci_radius", "n", "seed"]
    assert row["n"] == "20000" and row["seed"] == "0"
    assert abs(float(row["estimate"]) - 2 / 3) <= float(row["ci_radius"])
    assert "# samples=20000" in err and "# command=power" in err


def test_nondominated_example_lists_non_alternating(capsys):
    code, out, _ = call(capsys, "nondominated", "--mdp", "case_study", "--state", "star")
    assert code == 0
    rows = table(out)
    assert len(rows) == 5
    assert {r["status"] for r in rows} == {"nondominated"}
    code, out, _ = call(capsys, "nondominated", "--mdp", "case_study", "--state", "star", "--all")
    assert len(table(out)) > 5


def test_every_row_carries_n_and_seed(capsys, tmp_path):
    cards = tmp_path / "cards.json"
    cards.write_text(json.dumps({"vectors": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "A": [2], "B": [0, 1]}))
    runs = [
        ("optprob", "--mdp", "power_not_ic", "--state", "s1", "--gamma", "1", "--samples", "500"),
        ("rsd", "--mdp", "case_study", "--state", "star"),
        ("au-dist", "--mdp", "case_study", "--state", "empty", "--state", "r_se", "--samples", "200"),
        ("regret", "--mdp", "sharp_bound", "--state", "s1", "--reward", "[0,0.5,1]",
         "--policy", "right,left,left", "--switch", "1"),
        ("bandit", "--utility", "5", "4", "3", "2", "1", "--samples", "500"),
        ("retarget", "--problem", str(cards), "--utility", "10", "5", "0"),
        ("delayed-spec", "--mdp", "case_study", "--gamma", "0.9", "--p", "0.2", "--samples", "100"),
        ("figures", "--only", "sharp_bound"),
    ]
    for argv in runs:
        code, out, _ = call(capsys, *argv, "--seed", "7")
        assert code == 0, argv
        rows = table(out)
        assert rows, argv
        assert all(r["seed"] == "7" and r["n"].isdigit() for r in rows), argv


def test_regret_sharp_bound(capsys):
    code, out, _ = call(capsys, "regret", "--mdp", "sharp_bound", "--state", "s1", "--gamma", "0.5",
                        "--reward", "[0,0.5,1]", "--policy", "s1=right", "--switch", "1")
    assert code == 0
    assert float(table(out)[0]["estimate"]) == pytest.approx(0.75, abs=1e-12)


def test_retarget_card_tally(capsys, tmp_path):
    problem = tmp_path / "cards.json"
    problem.write_text(json.dumps({"vectors": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
                                   "A": [2], "B": [0, 1], "rule": "argmax"}))
    code, out, _ = call(capsys, "retarget", "--problem", str(problem), "--utility", "10", "5", "0",
                        "--ratio", "2")
    assert code == 0
    rows = table(out)
    assert sum(r["winner"] == "B" for r in rows) == 4
    assert sum(r["winner"] == "A" for r in rows) == 2
    assert rows[-1]["winner"] == "holds"


def test_figures_reports_known_conflict_without_failing(capsys):
    code, out, _ = call(capsys, "figures", "--only", "impossibility_graphical", "--samples", "200000")
    assert code == 0
    assert table(out)[0]["status"] == "KNOWN-CONFLICT"


def test_out_file_matches_stdout(capsys, tmp_path):
    argv = ["power", "--mdp", "uniform", "--state", "s1", "--gamma", "0.5", "--samples", "3000"]
    _, out, _ = call(capsys, *argv)
    target = tmp_path / "power.csv"
    code, printed, _ = call(capsys, *argv, "--out", str(target))
    assert code == 0 and printed == ""
    assert target.read_bytes() == out.encode()
    assert b"\r\n" not in target.read_bytes()


def test_reruns_are_byte_identical_across_worker_counts(capsys, monkeypatch):
    argv = ["power", "--mdp", "case_study", "--gamma", "0.9", "--samples", "300000", "--seed", "3"]
    outputs = []
    for threads in ("1", "4", "4"):
        monkeypatch.setenv("POWERMDP_THREADS", threads)
        code, out, _ = call(capsys, *argv)
        assert code == 0
        outputs.append(out)
    assert outputs[0] == outputs[1] == outputs[2]


@pytest.mark.parametrize("argv", [
    ["power", "--mdp", "case_study", "--bogus"],
    ["power"],
    [],
    ["frobnicate"],
    ["power", "--mdp", "no_such_mdp.json"],
    ["power", "--mdp", "case_study", "--state", "nowhere"],
    ["power", "--mdp", "case_study", "--dist", "wibble"],
    ["power", "--mdp", "case_study", "--gamma", "1.5"],
    ["power", "--mdp", "case_study", "--samples", "0"],
    ["au-dist", "--mdp", "case_study", "--state", "empty"],
    ["regret", "--mdp", "sharp_bound", "--reward", "[0,1]", "--policy", "left,left,left"],
    ["figures", "--only", "nope"],
    ["delayed-spec", "--mdp", "case_study", "--gamma", "0.9", "--p", "1.5"],
])
def test_input_errors_exit_2(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 2
    assert "error" in err


def test_bad_threads_setting_exits_2(capsys, monkeypatch):
    monkeypatch.setenv("POWERMDP_THREADS", "many")
    code, _, _ = call(capsys, "power", "--mdp", "case_study", "--samples", "100")
    assert code == 2


def test_malformed_mdp_file_reports_location(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"states": ["a",\n "b"], "actions": }')
    code, _, err = call(capsys, "power", "--mdp", str(bad))
    assert code == 2
    assert "line 2" in err


def test_involution_cap_exits_3(capsys, tmp_path):
    problem = tmp_path / "big.json"
    problem.write_text(json.dumps({"A": [[1] + [0] * 12], "B": [[0, 1] + [0] * 11]}))
    code, _, err = call(capsys, "copies", "--problem", str(problem))
    assert code == 3
    assert "cap" in err


def test_exact_orbit_cap_exits_3(capsys, tmp_path):
    n = 11
    T = np.zeros((n, 2, n))
    T[np.arange(n), 0, np.arange(n)] = 1.0
    T[np.arange(n), 1, (np.arange(n) + 1) % n] = 1.0
    path = tmp_path / "ring.json"
    save_mdp(RewardlessMdp([f"s{i}" for i in range(n)], ["stay", "go"], T), path)
    vec = json.dumps(list(range(n)))
    code, _, err = call(capsys, "orbit-vote", "--mdp", str(path), "--state", "s0", "--state", "s1",
                        "--dist", f"degenerate:{vec}")
    assert code == 3
    code, out, _ = call(capsys, "orbit-vote", "--mdp", str(path), "--state", "s0", "--state", "s1",
                        "--dist", f"degenerate:{vec}", "--perms", "20")
    assert code == 0
    assert table(out)[0]["exact"] == "false"


def test_copies_lists_witnesses(capsys, tmp_path):
    problem = tmp_path / "small.json"
    problem.write_text(json.dumps({"A": [[0, 0, 1]], "B": [[1, 0, 0], [0, 1, 0]]}))
    code, out, _ = call(capsys, "copies", "--problem", str(problem), "--copies", "2")
    assert code == 0
    assert [r["cycles"] for r in table(out)] == ["(1 2)", "(0 2)"]


def test_gamma_one_with_degenerate_spec_warns(capsys):
    code, _, err = call(capsys, "optprob", "--mdp", "sharp_bound", "--state", "s1", "--gamma", "1",
                        "--dist", "degenerate:[0,0.5,1]")
    assert code == 0
    assert "warning" in err
