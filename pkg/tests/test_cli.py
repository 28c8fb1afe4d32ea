"""Exit-code contract, artifact determinism, and config resolution."""

import json

import numpy as np
import pytest

from pmflow import cli


def run(*argv):
    return cli.entrypoint(list(argv))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_constant_csv(path, n=20, value=0.25):
    rows = "\n".join("%d,%.17g" % (i + 1, value) for i in range(n))
    path.write_text("i,value\n" + rows + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_smooth_writes_artifacts(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--n", "48", "--t-end", "0.25", "--samples", "11",
               "--out", str(out)) == 0
    diag = read_json(out / "diagnostics.json")
    assert diag["n"] == 48
    assert diag["bc"] == "neumann-neumann"
    assert len(diag["rows"]) == 11
    assert diag["violations"] == []
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,i,value"
    script = (out / "plot_trajectory.txt").read_text()
    assert "trajectory.csv" in script and "trajectory.png" in script
    # figures ride along; they are not part of the exit-code contract
    assert (out / "trajectory.png").stat().st_size > 0


def test_simulate_constant_datum_zero_dissipation(tmp_path):
    datum = tmp_path / "const.csv"
    write_constant_csv(datum)
    out = tmp_path / "out"
    assert run("simulate", "--datum", str(datum), "--t-end", "0.5",
               "--out", str(out)) == 0
    assert read_json(out / "diagnostics.json")["dissipation"] == 0.0


def test_simulate_unattainable_tolerance_exits_3(tmp_path):
    assert run("simulate", "--n", "32", "--rtol", "1e-30", "--atol", "1e-30",
               "--out", str(tmp_path / "out")) == 3


def test_simulate_staircase_forces_dirichlet_neumann(tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--datum", "staircase", "--n", "100",
               "--t-end", "0.25", "--samples", "6", "--rtol", "1e-6",
               "--out", str(out)) == 0
    assert read_json(out / "diagnostics.json")["bc"] == "dirichlet-neumann"
    assert run("simulate", "--datum", "staircase", "--n", "100",
               "--bc", "neumann-neumann", "--out", str(out)) == 2


def test_simulate_odd_reflection_runs_doubled_neumann_grid(tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--datum", "staircase", "--n", "100",
               "--t-end", "0.25", "--samples", "6", "--rtol", "1e-6",
               "--odd-reflection", "--out", str(out)) == 0
    diag = read_json(out / "diagnostics.json")
    assert diag["n"] == 200
    assert diag["bc"] == "neumann-neumann"


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------

def test_config_file_applies_and_flags_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 24, "t_end": 0.25, "samples": 6}))
    out_a = tmp_path / "a"
    assert run("simulate", "--config", str(cfg), "--out", str(out_a)) == 0
    assert read_json(out_a / "diagnostics.json")["n"] == 24
    out_b = tmp_path / "b"
    assert run("simulate", "--config", str(cfg), "--n", "16",
               "--out", str(out_b)) == 0
    assert read_json(out_b / "diagnostics.json")["n"] == 16


@pytest.mark.parametrize("argv", [
    ("simulate", "--model", "cubic"),
    ("simulate", "--samples", "1"),
    ("simulate", "--bc", "periodic"),
    ("simulate", "--datum", "no-such-file.csv"),
    ("simulate", "--lambda0", "0.4"),  # missing the paired upper constant
    ("converge", "--ns", ""),
    ("converge", "--ns", "16,8"),
    ("converge", "--ns", "8,16", "--datum", "fancy"),
])
def test_bad_configs_exit_2(tmp_path, argv):
    assert run(*argv, "--out", str(tmp_path / "out")) == 2


def test_config_file_errors_exit_2(tmp_path):
    missing = tmp_path / "nope.json"
    assert run("simulate", "--config", str(missing)) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("simulate", "--config", str(bad)) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"grid_size": 10}))
    assert run("simulate", "--config", str(unknown)) == 2


# ---------------------------------------------------------------------------
# counterexample
# ---------------------------------------------------------------------------

CE_ARGS = ("counterexample", "--n", "100", "--samples", "21",
           "--n-ref", "512")


def test_counterexample_passes_and_is_deterministic(tmp_path, capsys):
    out_a = tmp_path / "a"
    assert run(*CE_ARGS, "--out", str(out_a)) == 0
    stdout = capsys.readouterr().out
    assert "hypotheses: satisfied" in stdout
    assert "conclusion: satisfied" in stdout
    for name in ("params.json", "hypotheses.json", "conclusion.json",
                 "key_bounds.json", "trajectory.csv", "reference.csv",
                 "gap_report.csv", "gap_report.json",
                 "plot_counterexample.txt", "counterexample.png"):
        assert (out_a / name).exists(), name
    assert read_json(out_a / "hypotheses.json")["all_satisfied"]
    assert read_json(out_a / "conclusion.json")["satisfied"]
    assert read_json(out_a / "key_bounds.json")["satisfied"]

    out_b = tmp_path / "b"
    assert run(*CE_ARGS, "--out", str(out_b)) == 0
    for name in ("params.json", "hypotheses.json", "conclusion.json",
                 "key_bounds.json", "trajectory.csv", "reference.csv",
                 "gap_report.csv", "gap_report.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_counterexample_inadmissible_n_exits_5(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("counterexample", "--n", "4", "--out", str(out)) == 5
    err = capsys.readouterr().err
    assert "0 < m_n < n" in err
    # the params artifact still lands so the failure can be inspected
    params = read_json(out / "params.json")
    assert params["admissible"] is False


def test_counterexample_supercritical_window_exits_5(tmp_path, capsys):
    assert run("counterexample", "--n", "16", "--sigma0", "0.9",
               "--out", str(tmp_path / "out")) == 5
    err = capsys.readouterr().err
    assert "(pi/2)(sigma0/2) + A_n <= sigma0" in err


def test_counterexample_gap_threshold_violation_exits_4(tmp_path):
    out = tmp_path / "out"
    assert run(*CE_ARGS, "--gap-threshold", "10", "--out", str(out)) == 4
    # the failing report is still written for inspection
    rows = (out / "gap_report.csv").read_text().splitlines()
    assert rows[0].startswith("n,t,")
    assert len(rows) == 22


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------

def test_converge_smooth_family(tmp_path):
    out = tmp_path / "out"
    assert run("converge", "--ns", "8,16,32", "--n-ref", "128",
               "--t-end", "0.25", "--samples", "6", "--out", str(out)) == 0
    report = read_json(out / "gap_report.json")
    assert report["ns"] == [8, 16, 32]
    assert (out / "plot_gaps.txt").exists()
    assert (out / "gaps.png").stat().st_size > 0


def test_converge_staircase_family_clears_auto_thresholds(tmp_path):
    out = tmp_path / "out"
    assert run("converge", "--ns", "100", "--n-ref", "512", "--samples", "11",
               "--rtol", "1e-6", "--datum", "staircase",
               "--out", str(out)) == 0
    report = read_json(out / "gap_report.json")
    gaps = {row["t"]: (row["gap_sup"], row["gap_tv"])
            for row in report["gaps"]}
    assert gaps[1.0][0] > 0.2 and gaps[1.0][1] > 0.2
    assert abs(gaps[0.0][0]) < 1.0


def test_converge_integration_failure_exits_3_with_partial_report(tmp_path):
    out = tmp_path / "out"
    assert run("converge", "--ns", "8,16", "--n-ref", "32", "--t-end", "0.1",
               "--samples", "3", "--rtol", "1e-30", "--atol", "1e-30",
               "--out", str(out)) == 3
    partial = read_json(out / "partial_report.json")
    assert partial["completed_ns"] == []


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def test_selftest_passes_and_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("selftest", "--seed", "11", "--draws", "20",
               "--out", str(out)) == 0
    stdout = capsys.readouterr().out
    for name in ("phi-derivatives", "tv-m-plus-bruteforce",
                 "integrator-oracle", "monotonicity", "sign-measure"):
        assert f"ok   {name}" in stdout
    results = read_json(out / "selftest.json")["results"]
    assert all(r["passed"] for r in results)


def test_selftest_injected_fault_exits_4_naming_suite(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("selftest", "--seed", "11", "--draws", "20",
               "--inject-fault", "phi-prime-sign-flip",
               "--out", str(out)) == 4
    captured = capsys.readouterr()
    assert "selftest failed in suite: sign-measure" in captured.err
    assert "FAIL sign-measure" in captured.out
