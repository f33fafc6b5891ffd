import json

import numpy as np
import pytest

import oracles
from blowuplab.cli import EXIT_CERTIFICATE, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_OK, main

SMALL = {
    "domain": {"shape": "disk", "center": [0, 0], "radius": 1},
    "grid": {"h": 0.0625},
    "nonlinearity": {"kind": "power", "p": 2},
    "solver": {"ladder": {"factor": 16, "finalize": True, "rho": 0.25}},
    "analysis": {"fit_window": [0.125, 0.25], "rho": 0.2},
    "seed": 0,
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, command="solve", out="out", extra=()):
    return main([command, "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


def test_solve_writes_artifacts(tmp_path):
    assert run(tmp_path, SMALL) == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "converged" and report["solve"]["finalized"]
    header = (tmp_path / "out" / "solution.csv").read_text().splitlines()[0]
    assert header == "x,y,d,u,residual"


def test_solve_is_deterministic(tmp_path):
    assert run(tmp_path, SMALL, out="a") == EXIT_OK
    assert run(tmp_path, SMALL, out="b") == EXIT_OK
    for name in ("report.json", "solution.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exponential_with_rate_is_solved_in_original_units(tmp_path):
    cfg = dict(SMALL, nonlinearity={"kind": "exponential", "a": 4.0},
               solver={"ladder": {"rho": 0.25, "stop_tol": 1e-4}})
    assert run(tmp_path, cfg) == EXIT_OK
    data = np.loadtxt(tmp_path / "out" / "solution.csv", delimiter=",", skiprows=1)
    exact = oracles.bieberbach_scaled(data[:, :2], 4.0)
    deep = data[:, 2] >= 0.25
    assert np.max(np.abs(data[deep, 3] - exact[deep])) < 1e-3
    assert json.loads((tmp_path / "out" / "report.json").read_text())["grid"]["rescaled_by"] == 4.0


def test_p_below_one_is_a_config_error(tmp_path):
    assert run(tmp_path, dict(SMALL, nonlinearity={"kind": "power", "p": 0.5})) == EXIT_CONFIG


def test_unknown_key_is_a_config_error(tmp_path):
    assert run(tmp_path, dict(SMALL, colour="blue")) == EXIT_CONFIG


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_argument_errors(tmp_path):
    assert main(["solve"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert run(tmp_path, SMALL, extra=("--threads", "0")) == EXIT_CONFIG


def test_ladder_cap_exit_code_and_partial_report(tmp_path):
    cfg = dict(SMALL, solver={"ladder": {"cap": 1, "stop_tol": 0, "rho": 0.25}})
    assert run(tmp_path, cfg) == EXIT_NONCONVERGENCE
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "non-converged" and len(report["solve"]["labels"]) == 2


def test_analyze_round_trip_and_failed_certificate(tmp_path):
    assert run(tmp_path, SMALL) == EXIT_OK
    assert run(tmp_path, SMALL, command="analyze") == EXIT_OK
    out = json.loads((tmp_path / "out" / "analysis.json").read_text())
    assert out["bound_certificate"]["passed"]
    strict = dict(SMALL, analysis=dict(SMALL["analysis"], N2=1.0))
    assert run(tmp_path, strict, command="analyze") == EXIT_CERTIFICATE
    out = json.loads((tmp_path / "out" / "analysis.json").read_text())
    assert not out["bound_certificate"]["upper_pass"]


def test_analyze_rejects_truncated_csv(tmp_path):
    assert run(tmp_path, SMALL) == EXIT_OK
    csv = tmp_path / "out" / "solution.csv"
    lines = csv.read_text().splitlines()
    csv.write_text("\n".join(lines[:-1] + [lines[-1].rsplit(",", 2)[0]]) + "\n")
    assert run(tmp_path, SMALL, command="analyze") == EXIT_CONFIG


def test_certify_single_barrier(tmp_path):
    cfg = {"certify": {"barriers": ["keller_osserman_power", "singular_lower"],
                       "params": {"n": 2, "p": 2, "lam": 1, "Lam": 1, "K": 0}}}
    assert run(tmp_path, cfg, command="certify") == EXIT_OK
    margins = json.loads((tmp_path / "out" / "margins.json").read_text())
    assert margins["all_pass"] and margins["n_reports"] == 2


def test_certify_doubled_lower_constant_fails(tmp_path):
    # the admissible constant is at most 2^{gamma/2} c0, which is below 2 c0 for p = 3
    cfg = {"certify": {"barriers": ["singular_lower"], "constant_factor": 2.0,
                       "params": {"n": 2, "p": 3, "lam": 1, "Lam": 1, "K": 0}}}
    assert run(tmp_path, cfg, command="certify") == EXIT_CERTIFICATE
    worst = json.loads((tmp_path / "out" / "margins.json").read_text())["worst"]
    assert worst["min_margin"] < 0 and worst["argmin_point"] is not None


def test_certify_singular_out_of_range(tmp_path):
    cfg = {"certify": {"barriers": ["singular_lower"], "params": {"n": 3, "p": 4, "lam": 1, "Lam": 1}}}
    assert run(tmp_path, cfg, command="certify") == EXIT_CONFIG


def test_certify_failed_search_is_a_certificate_failure(tmp_path):
    cfg = {"certify": {"barriers": ["exterior_ball_lower"],
                       "params": {"n": 2, "p": 2, "lam": 1, "Lam": 4, "delta": 1e-7}}}
    assert run(tmp_path, cfg, command="certify") == EXIT_CERTIFICATE


def test_certify_sweep(tmp_path):
    cfg = {"certify": {"barriers": ["keller_osserman_power", "keller_osserman_exp", "singular_lower"],
                       "draws": 4, "n_samples": 2000}, "seed": 7}
    assert run(tmp_path, cfg, command="certify") == EXIT_OK
    margins = json.loads((tmp_path / "out" / "margins.json").read_text())
    assert margins["n_reports"] + len(margins["skipped"]) == 12


def test_proptest_small(tmp_path):
    cfg = {"proptest": {"operators": 3, "trials_per_operator": 1}}
    assert run(tmp_path, cfg, command="proptest") == EXIT_OK
    rep = json.loads((tmp_path / "out" / "proptest.json").read_text())["comparison_suite"]
    assert rep["operators"] == 3 and rep["mutant_caught"]


@pytest.mark.parametrize("name", ["bieberbach", "power_disk", "checkerboard_uniqueness",
                                  "certify_keller_osserman"])
def test_demo_configs_validate(name):
    from pathlib import Path

    from blowuplab.config import load_config
    path = Path(__file__).resolve().parents[1] / "demos" / "configs" / f"{name}.json"
    assert load_config(path).raw


def test_coarse_grid_with_unit_slack(tmp_path):
    # the catalog constants N1 = 1, N2 = 8 are far from the attained ratios near 2,
    # so discretization error alone does not break the certificate at h = 1/16
    cfg = dict(SMALL, nonlinearity={"kind": "exponential"}, solver={"ladder": {"rho": 0.25}},
               analysis=dict(SMALL["analysis"], slack=1.0))
    assert run(tmp_path, cfg) == EXIT_OK
    assert run(tmp_path, cfg, command="analyze") == EXIT_OK
    cert = json.loads((tmp_path / "out" / "analysis.json").read_text())["bound_certificate"]
    assert 1.0 < cert["min_ratio"] < 2.1 and cert["max_ratio"] < 2.5


def test_solve_exits_five_when_its_certificate_fails(tmp_path):
    cfg = dict(SMALL, analysis=dict(SMALL["analysis"], N2=1.0))
    assert run(tmp_path, cfg) == EXIT_CERTIFICATE
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "converged" and not report["bound_certificate"]["passed"]
