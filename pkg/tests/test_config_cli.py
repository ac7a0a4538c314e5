import csv
import io

import numpy as np
import pytest

from jmh.cli import SCHEMES, SWEEP_COLUMNS, main
from jmh.config import ConfigError, load_config, parse_config
from jmh.hotspot import load_stage

SMALL = "scenario:\n  n_bs: 3\n  n_users: 6\n  trials: 2\n"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return str(path)


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------- config

def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg.scenario.n_bs == 7 and cfg.solver.inner_method == "newton"


def test_sections_and_top_level_keys():
    cfg = parse_config({"n_users": 12, "solver": {"max_outer": 7}, "hotspot": {"k_max": 30}, "tol_outer": 1e-5})
    assert cfg.scenario.n_users == 12 and cfg.solver.max_outer == 7
    assert cfg.solver.tol_outer == 1e-5 and cfg.hotspot.k_max == 30


@pytest.mark.parametrize("data,key", [({"n_userz": 3}, "n_userz"), ({"scenario": {"bogus": 1}}, "scenario.bogus"),
                                      ({"solver": {"n_users": 3}}, "solver.n_users"),
                                      ({"scenario": {"n_users": 2.5}}, "scenario.n_users"),
                                      ({"scenario": {"orthogonal_rb": "yes"}}, "scenario.orthogonal_rb")])
def test_bad_keys_are_named(data, key):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    assert info.value.key == key


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("scenario: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


# ---------------------------------------------------------------- solve

def test_unknown_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("scenario:\n  n_user: 5\n")
    assert main(["solve", "--config", str(path)]) == 2
    assert "n_user" in capsys.readouterr().err


def test_oracle_on_large_instance_exits_2(tmp_path, capsys):
    path = tmp_path / "big.yaml"
    path.write_text("scenario:\n  n_bs: 7\n  n_users: 12\n")
    assert main(["solve", "--config", str(path), "--oracle"]) == 2
    assert "enumeration limit" in capsys.readouterr().err


def test_solve_is_byte_identical(small_config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["solve", "--config", small_config, "--seed", "4", "--out", str(a)]) == 0
    assert main(["solve", "--config", small_config, "--seed", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a.read_text())
    assert list(rows[0]) == SWEEP_COLUMNS
    assert [r["scheme"] for r in rows] == SCHEMES


def test_solve_zero_lambda_has_no_cost(small_config, capsys):
    assert main(["solve", "--config", small_config, "--lambda", "0"]) == 0
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if l.startswith("weighted cost"))
    assert float(line.split()[-1]) == 0.0


def test_solve_with_oracle(small_config, capsys):
    assert main(["solve", "--config", small_config, "--seed", "1", "--oracle"]) == 0
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if l.startswith("exhaustive optimum"))
    gap = float(line.split("gap ")[1].rstrip(")"))
    assert -1e-9 <= gap <= 0.005


def test_nonconvergence_exit_code(small_config, monkeypatch):
    import jmh.cli as cli

    real = cli.run_trial
    monkeypatch.setattr(cli, "run_trial", lambda cfg, seed: (real(cfg, seed)[0], False))
    assert main(["solve", "--config", small_config, "--seed", "2"]) == 1
    assert main(["solve", "--config", small_config, "--seed", "2", "--allow-nonconverged"]) == 0
    assert main(["sweep", "--config", small_config, "--axis", "users", "--values", "6", "--trials", "1"]) == 1


# ---------------------------------------------------------------- sweep

def test_unknown_axis_exits_2(small_config):
    assert main(["sweep", "--config", small_config, "--axis", "speed", "--values", "1"]) == 2


def test_sweep_layout_and_determinism(small_config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--config", small_config, "--axis", "users", "--values", "6,4", "--trials", "2"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a.read_text())
    assert list(rows[0]) == SWEEP_COLUMNS
    assert [(r["axis_value"], r["scheme"]) for r in rows] == [(v, s) for v in ("4", "6") for s in SCHEMES]
    ub = [r for r in rows if r["scheme"] == "upper_bound"]
    prop = [r for r in rows if r["scheme"] == "proposed"]
    assert all(float(u["mean_utility"]) >= float(p["mean_utility"]) for u, p in zip(ub, prop))


def test_single_trial_sweep_equals_solve(small_config, tmp_path):
    sweep, solve = tmp_path / "sweep.csv", tmp_path / "solve.csv"
    assert main(["sweep", "--config", small_config, "--axis", "lambda", "--values", "0.5", "--trials", "1",
                 "--seed", "3", "--out", str(sweep)]) == 0
    assert main(["solve", "--config", small_config, "--seed", "3", "--out", str(solve)]) == 0
    strip = lambda rows: [{k: v for k, v in r.items() if k not in ("axis_value", "stderr")} for r in rows]
    assert strip(read_csv(sweep.read_text())) == strip(read_csv(solve.read_text()))


def test_lambda_trades_rate_for_cost(tmp_path):
    path = tmp_path / "mid.yaml"
    path.write_text("scenario:\n  n_bs: 4\n  n_users: 12\n")
    out = tmp_path / "lam.csv"
    assert main(["sweep", "--config", str(path), "--axis", "lambda", "--values", "0,1,20", "--trials", "8",
                 "--out", str(out)]) == 0
    rows = [r for r in read_csv(out.read_text()) if r["scheme"] == "proposed"]
    rate = [float(r["mean_sum_rate"]) for r in rows]
    cost = [float(r["mean_cost"]) for r in rows]
    assert rate[0] >= rate[1] >= rate[2]
    assert cost[0] >= cost[1] >= cost[2]


def test_static_users_still_gain(tmp_path):
    path = tmp_path / "mid.yaml"
    path.write_text("scenario:\n  n_bs: 4\n  n_users: 12\n")
    out = tmp_path / "v.csv"
    assert main(["sweep", "--config", str(path), "--axis", "vmax", "--values", "0", "--trials", "5",
                 "--out", str(out)]) == 0
    rows = {r["scheme"]: float(r["mean_utility"]) for r in read_csv(out.read_text())}
    assert rows["no_migration"] < rows["proposed"]


def test_bandwidth_sweep_runs(tmp_path):
    path = tmp_path / "rb.yaml"
    path.write_text("scenario:\n  n_bs: 2\n  n_users: 4\n")
    out = tmp_path / "rb.csv"
    assert main(["sweep", "--config", str(path), "--axis", "users_rb", "--values", "4", "--trials", "2",
                 "--out", str(out), "--allow-nonconverged"]) == 0
    rows = read_csv(out.read_text())
    assert [r["scheme"] for r in rows] == SCHEMES
    assert all(np.isfinite(float(r["mean_utility"])) for r in rows)


# ---------------------------------------------------------------- hotspot and oracle

def hotspot_rows(tmp_path, k_range):
    out = tmp_path / "hs.csv"
    assert main(["hotspot", "--k-range", k_range, "--out", str(out)]) == 0
    return read_csv(out.read_text())


def test_hotspot_rows_sum_to_k(tmp_path):
    for row in hotspot_rows(tmp_path, "1:70"):
        assert sum(int(v) for v in row["loads"].split(";")) == int(row["n_users"])


def test_hotspot_utility_peaks_near_k_star(tmp_path):
    rows = hotspot_rows(tmp_path, "1:70")
    utility = np.array([float(r["utility"]) for r in rows])
    peak = int(rows[int(np.argmax(utility))]["n_users"])
    k_star = float(rows[0]["k_star"])
    assert abs(peak - np.floor(k_star)) <= 1


def test_hotspot_utility_unimodal(tmp_path):
    utility = np.array([float(r["utility"]) for r in hotspot_rows(tmp_path, "1:70")])
    peak = int(np.argmax(utility))
    assert (np.diff(utility[:peak + 1]) > 0).all() and (np.diff(utility[peak:]) < 0).all()


def test_hotspot_stages_in_order(tmp_path):
    stages = [r["stage"] for r in hotspot_rows(tmp_path, "1:70")]
    assert sorted(set(stages)) == ["I", "II", "III", "IV"]
    assert stages == sorted(stages)  # the labels advance monotonically with K


def test_stage_labels():
    J = np.array([10.0, 5.5, 5.5])
    assert load_stage([4, 0, 0], J, 21.0) == "I"
    assert load_stage([8, 3, 3], J, 21.0) == "II"
    assert load_stage([11, 7, 7], J, 21.0) == "III"
    assert load_stage([10, 20, 5], J, 21.0) == "IV"


def test_bad_k_range_exits_2():
    assert main(["hotspot", "--k-range", "9:3"]) == 2
    assert main(["hotspot", "--k-range", "abc"]) == 2


def test_oracle_subcommand(small_config, tmp_path):
    out = tmp_path / "oracle.csv"
    assert main(["oracle", "--config", small_config, "--trials", "3", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert [r["seed"] for r in rows] == ["0", "1", "2"]
    for r in rows:
        assert float(r["upper_bound"]) >= float(r["exhaustive"]) * (1 - 1e-9)
        assert float(r["rel_gap"]) <= 0.005
