import csv
import json

import pytest

from rcmdp_deploy.cli import EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, OUT_ENV, main

SOLVE = ["solve", "--target", "14", "--deadline", "100", "--gamma-factor", "1"]


def _run(tmp_path, name, argv):
    out = tmp_path / name
    return main(argv + ["--out", str(out)]), out


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_solve_writes_manifest(tmp_path):
    code, out = _run(tmp_path, "s", SOLVE)
    assert code == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["seed"] == 0
    assert set(man["outputs"]) == {"solution_14.json", "report_14.json"}
    rep = json.loads((out / "report_14.json").read_text())
    assert rep["worst_case_constraint_value"] <= 100 + 1e-7


def test_infeasible_deadline_exits_2(tmp_path, capsys):
    code, out = _run(tmp_path, "s", ["solve", "--target", "14", "--deadline", "5"])
    assert code == EXIT_INFEASIBLE
    assert "deadline" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--target", "nowhere", "--deadline", "50"],
        ["solve", "--target", "14", "--deadline", "-1"],
        ["assign", "--pf", "0.2,abc", "--team", "3"],
        ["assign", "--pf", "0.2,0.3", "--team", "1"],
        ["solve", "--map", "/no/such/map.json", "--deadline", "50"],
    ],
)
def test_validation_errors_exit_3(tmp_path, argv):
    code, _ = _run(tmp_path, "v", argv)
    assert code == EXIT_INVALID


def test_unreachable_target_exits_2(tmp_path):
    code, _ = _run(tmp_path, "a", ["assign", "--pf", "0.2,1.0", "--team", "4"])
    assert code == EXIT_INFEASIBLE


def test_assign_output(tmp_path):
    code, out = _run(tmp_path, "a", ["assign", "--pf", "0.5,0.1,0.3", "--team", "7", "--assign-mode", "exact"])
    assert code == EXIT_OK
    doc = json.loads((out / "assignment.json").read_text())
    assert sum(doc["robots_per_target"]) == 7


def test_env_var_sets_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envout"))
    assert main(["assign", "--pf", "0.5,0.1", "--team", "3"]) == EXIT_OK
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_generate_map_roundtrip(tmp_path):
    code, out = _run(tmp_path, "g", ["generate-map", "--vertices", "12", "--targets", "2", "--seed", "3"])
    assert code == EXIT_OK
    m = out / "map.json"
    code, out2 = _run(tmp_path, "d", ["deploy", "--map", str(m), "--team", "4", "--deadline", "200"])
    assert code == EXIT_OK
    dep = json.loads((out2 / "deployment.json").read_text())
    assert len(dep["assignment"]) == 4 and sum(dep["robots_per_target"]) == 4


def test_usage_errors_exit_3(tmp_path):
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, "u", SOLVE + ["--trials", "300"])
    assert exc.value.code == EXIT_INVALID
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--gamma", "1", "--gamma-factor", "1"])
    assert exc.value.code == EXIT_INVALID


def test_simulate_outputs(tmp_path):
    argv = ["simulate", "--target", "14", "--deadline", "100", "--gamma-factor", "1", "--trials", "300"]
    code, out = _run(tmp_path, "sim", argv + ["--eps-mode", "sampled"])
    assert code == EXIT_OK
    rows = list(csv.DictReader((out / "trials.csv").open()))
    assert len(rows) == 300
    code, out = _run(tmp_path, "team", argv + ["--team", "5"])
    assert code == EXIT_OK
    assert json.loads((out / "stats.json").read_text())["stats"]["n_trials"] == 300


SWEEP = ["sweep", "--axis", "deadline", "--grid", "60", "100", "--target", "14", "--gamma-factor", "1", "--trials", "200"]


def test_reruns_are_byte_identical(tmp_path):
    _, a = _run(tmp_path, "a", SWEEP)
    _, b = _run(tmp_path, "b", SWEEP)
    fa, fb = _files(a), _files(b)
    assert set(fa) == {"sweep.csv", "sweep.png", "manifest.json"}
    assert fa == fb
    _, c = _run(tmp_path, "c", SWEEP[:-1] + ["201"])
    assert _files(c)["sweep.csv"] != fa["sweep.csv"]


def test_sweep_check(tmp_path, capsys):
    code, out = _run(tmp_path, "a", SWEEP + ["--check"])
    assert code == EXIT_OK and "check passed" in capsys.readouterr().out
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["axis"] for r in rows] == ["deadline", "deadline"]
    assert float(rows[0]["theoretical_success"]) < float(rows[1]["theoretical_success"])


def test_sweep_check_failure_exits_3(tmp_path):
    # decreasing deadlines make theory non-monotone along the listed order
    argv = ["sweep", "--axis", "deadline", "--grid", "100", "60", "--target", "14", "--gamma-factor", "1",
            "--trials", "50", "--check"]
    code, _ = _run(tmp_path, "f", argv)
    assert code == EXIT_INVALID
