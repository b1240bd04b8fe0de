import csv
import io
import json
import math
from pathlib import Path

import pytest

from cyclic_rdp.accountant import CurvatureSpec, PrivacyParams, bound_multi_epoch, rdp_to_dp
from cyclic_rdp.cli import cmd_bound, format_number, main
from cyclic_rdp.config import ConfigError, RunConfig, load_config

DATA = Path(__file__).parent / "data"


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


BASE = {
    "privacy": {"alpha": 2, "sigma": 1.0, "lam": 0.1, "C": 1.0, "b": 1, "k": 4, "T": 8},
    "curvature": {"m": 0.0, "M": 1.0},
}


def test_format_number():
    assert format_number(math.inf) == "inf"
    assert format_number(-math.inf) == "-inf"
    assert format_number(0.1) == "0.1"
    x = 1 / 3
    assert float(format_number(x)) == x


@pytest.mark.parametrize("cmd, cfg, golden", [
    ("bound", "bound_convex.json", "bound_convex.golden.json"),
    ("plan", "plan.json", "plan.golden.json"),
    ("sweep", "sweep_sigma.json", "sweep_sigma.golden.csv"),
])
def test_golden_files(cmd, cfg, golden, tmp_path):
    out = tmp_path / "out"
    assert main([cmd, "--config", str(DATA / cfg), "--out", str(out)]) == 0
    assert out.read_bytes() == (DATA / golden).read_bytes()


def test_bound_golden_matches_accountant():
    report = json.loads((DATA / "bound_convex.golden.json").read_text())
    p = PrivacyParams(2.0, 1.0, 0.1, 1.0, 1, 4, 8)
    expected = bound_multi_epoch(p, CurvatureSpec(0.0, 1.0)).value
    assert report["best"]["regime"] == "MultiEpoch"
    assert report["best"]["value"] == expected
    assert expected == pytest.approx(0.04, rel=1e-14)
    assert report["dp"][0]["epsilon"] == rdp_to_dp(expected, 2.0, 1e-5)
    assert report["pabi"]["value"] == pytest.approx(0.01)
    assert report["tstar"]["value"] == pytest.approx(0.03)


def test_plan_golden_matches_planner_example():
    report = json.loads((DATA / "plan.golden.json").read_text())
    assert report["lam_bar"] == 0.25
    assert report["sigma_formula"] == pytest.approx(0.125 * math.sqrt(15), rel=1e-14)
    assert report["ell_bar"] == pytest.approx(math.log(2) / math.log(1.25), rel=1e-14)
    assert report["achieved_bound"] <= 0.1


@pytest.mark.parametrize("cmd", ["bound", "plan", "sweep"])
def test_output_is_byte_identical(cmd, capsys):
    cfg = {"bound": "bound_convex.json", "plan": "plan.json", "sweep": "sweep_sigma.json"}[cmd]
    _, first, _ = run([cmd, "--config", str(DATA / cfg)], capsys)
    _, second, _ = run([cmd, "--config", str(DATA / cfg)], capsys)
    assert first == second and first


def test_numbers_round_trip(capsys):
    _, out, _ = run(["bound", "--config", str(DATA / "bound_convex.json")], capsys)
    report = json.loads(out)
    report_direct = json.loads(json.dumps(cmd_bound(load_config(str(DATA / "bound_convex.json"))), default=str))
    assert report["lipschitz"] == report_direct["lipschitz"]
    for r in report["bounds"]:
        if r["valid"]:
            assert isinstance(r["value"], float)
        else:
            assert r["value"] == "inf"


def test_no_valid_regime_warns(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    cfg["privacy"].update(lam=1.0, T=3)
    code, out, err = run(["bound", "--config", write(tmp_path, cfg)], capsys)
    assert code == 0
    assert json.loads(out)["best"]["value"] == "inf"
    assert "warning" in err


@pytest.mark.parametrize("mutate", [
    lambda c: c["privacy"].pop("sigma"),
    lambda c: c["privacy"].update(b=3),
    lambda c: c["privacy"].update(alpha=1.0),
    lambda c: c["privacy"].update(colour="red"),
    lambda c: c.update(extra={}),
    lambda c: c["curvature"].update(m=-1.0),
    lambda c: c["privacy"].update(T="many"),
])
def test_invalid_config_exits_2(mutate, tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    code, out, err = run(["bound", "--config", write(tmp_path, cfg)], capsys)
    assert code == 2 and out == ""
    assert err.startswith("error:")


def test_missing_sigma_names_the_field(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    del cfg["privacy"]["sigma"]
    _, _, err = run(["bound", "--config", write(tmp_path, cfg)], capsys)
    assert "sigma" in err


def test_unreadable_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["bound", "--config", str(bad)], capsys)[0] == 2
    assert run(["bound", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2


def test_config_accepts_inf_and_rejects_unknown():
    cfg = RunConfig.from_dict({"privacy": {"C": "inf"}, "curvature": {"m": 0, "M": 1, "d_h": "inf"}})
    assert cfg.privacy["C"] == math.inf
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"privacy": {"C": "lots"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"oracle": {"suites": ["nope"]}})


def sweep_table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def test_single_point_sweep_equals_bound(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    cfg["sweep"] = {"axes": {"privacy.sigma": [1.0]}}
    path = write(tmp_path, cfg)
    _, text, _ = run(["sweep", "--config", path], capsys)
    header, rows = sweep_table(text)
    assert len(rows) == 1
    _, out, _ = run(["bound", "--config", path], capsys)
    report = json.loads(out)
    row = dict(zip(header, rows[0]))
    assert row["best_regime"] == report["best"]["regime"]
    assert float(row["best_value"]) == report["best"]["value"]
    for r in report["bounds"]:
        if r["regime"] in row:
            assert float(row[r["regime"]]) == float(r["value"])


def test_sweep_monotone_in_sigma():
    header, rows = sweep_table((DATA / "sweep_sigma.golden.csv").read_text())
    assert header[:2] == ["curvature.m", "privacy.sigma"]
    for m in ("0.0", "0.5"):
        best = [float(r[header.index("best_value")]) for r in rows if r[0] == m]
        assert best == sorted(best, reverse=True)


def test_sweep_rows_are_sorted(capsys):
    _, text, _ = run(["sweep", "--config", str(DATA / "sweep_sigma.json")], capsys)
    _, rows = sweep_table(text)
    keys = [(float(r[0]), float(r[1])) for r in rows]
    assert keys == sorted(keys) and len(keys) == 8


def test_sweep_m_to_zero_approaches_convex(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    cfg["sweep"] = {"axes": {"curvature.m": [0.0, 1e-9, 1e-6]}}
    _, text, _ = run(["sweep", "--config", write(tmp_path, cfg)], capsys)
    header, rows = sweep_table(text)
    col = header.index("MultiEpoch")
    convex = float(rows[0][header.index("MultiEpochConvex")])
    assert float(rows[0][col]) == convex
    assert abs(float(rows[1][col]) - convex) / convex <= 1e-6
    assert abs(float(rows[2][col]) - convex) / convex <= 1e-3


def test_sweep_with_oracle(tmp_path, capsys):
    cfg = {
        "privacy": {"alpha": 2, "sigma": 1.0, "lam": 0.25, "C": 1.0, "b": 1, "k": 2, "T": 4},
        "curvature": {"m": 0.0, "M": 1.0},
        "oracle": {"enabled": True, "grid_cells": 1024},
        "sweep": {"axes": {"privacy.sigma": [1.0, 2.0]}},
    }
    _, text, _ = run(["sweep", "--config", write(tmp_path, cfg)], capsys)
    header, rows = sweep_table(text)
    assert header[-1] == "oracle_divergence"
    for row in rows:
        D = float(row[-1])
        assert 0 < D <= float(row[header.index("best_value")])


def test_sweep_without_axes_exits_2(tmp_path, capsys):
    assert run(["sweep", "--config", write(tmp_path, BASE)], capsys)[0] == 2


SIM = {
    "privacy": {"alpha": 2, "sigma": 0.5, "lam": 0.25, "C": 1.0, "b": 2, "k": 6, "T": 7},
    "curvature": {"m": 0.5, "M": 1.0},
    "regularizer": {"kind": "ball", "radius": 3.0},
    "dataset": {"dim": 2, "seed": 3, "i_star": 4, "x0": [0.5, -0.5]},
}


def test_simulate_writes_files_and_tstar(tmp_path, capsys):
    cfg = write(tmp_path, SIM)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", str(out_a), "--seed", "5"], capsys)[0] == 0
    assert run(["simulate", "--config", cfg, "--out", str(out_b), "--seed", "5"], capsys)[0] == 0
    for name in ("trajectory.csv", "trajectory_prime.csv", "summary.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    summary = json.loads((out_a / "summary.json").read_text())
    assert summary["t_star"] == 2
    assert summary["first_divergence"] == 2
    lines = (out_a / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2" and len(lines) == 1 + 8


def test_simulate_zero_steps(tmp_path, capsys):
    cfg = json.loads(json.dumps(SIM))
    cfg["privacy"]["T"] = 0
    out = tmp_path / "sim"
    assert run(["simulate", "--config", write(tmp_path, cfg), "--out", str(out)], capsys)[0] == 0
    assert (out / "trajectory.csv").read_text() == "t,x1,x2\n0,0.5,-0.5\n"
    assert json.loads((out / "summary.json").read_text())["first_divergence"] is None


def test_simulate_rejects_x0_outside_ball(tmp_path, capsys):
    cfg = json.loads(json.dumps(SIM))
    cfg["dataset"]["x0"] = [5.0, 0.0]
    assert run(["simulate", "--config", write(tmp_path, cfg)], capsys)[0] == 2


def test_verify_passes_and_fails(tmp_path, capsys):
    good = {"oracle": {"suites": ["lipschitz", "prox", "residual-qp"], "n_datasets": 4, "n_pairs": 1000}}
    code, out, err = run(["verify", "--config", write(tmp_path, good)], capsys)
    assert code == 0 and json.loads(out)["passed"]
    assert err.count("PASS") == 3
    bad = {"oracle": {"suites": ["lipschitz"], "n_datasets": 4, "n_pairs": 1000, "lipschitz_scale": 0.5}}
    code, out, err = run(["verify", "--config", write(tmp_path, bad, "bad.json")], capsys)
    assert code == 1 and "FAIL lipschitz" in err
