import json
import math

import pytest

from wiener_sampling.delay import Degenerate, Exponential
from wiener_sampling.experiments import (
    DIVERGENT,
    FEASIBLE,
    INFEASIBLE,
    SweepConfig,
    asymptotic_report,
    default_grid,
    read_sweep_csv,
    run_sweep,
    sidecar_path,
)

EXP1 = Exponential(1.0)
ANALYTIC_POLICIES = ("signal-threshold", "age-threshold", "zero-wait")


def test_default_grids():
    g = default_grid("fmax")
    assert len(g) == 24 and g[0] == pytest.approx(0.01) and g[-1] == pytest.approx(2.0)
    s = default_grid("sigma")
    assert len(s) == 15 and s[0] == pytest.approx(0.05) and s[-1] == pytest.approx(1.5)
    assert SweepConfig("fmax").n_cycles == 200_000


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig("time")
    with pytest.raises(ValueError):
        SweepConfig("fmax", [1.0, 0.5])
    with pytest.raises(ValueError):
        SweepConfig("fmax", [0.5], policies=[])
    with pytest.raises(ValueError):
        SweepConfig("fmax", [0.5], policies=["random"])
    with pytest.raises(ValueError):
        SweepConfig("fmax", [0.5], n_cycles=10)


def test_fmax_sweep_analytic_monotone():
    cfg = SweepConfig("fmax", n_cycles=0, policies=["signal-threshold", "age-threshold"])
    t = run_sweep(cfg)
    for p in ("signal-threshold", "age-threshold"):
        vals = t.column(f"{p}_analytic")
        assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
    assert abs(t.rows[0]["ratio_opt_age"] - 1 / 3) <= 0.05


def test_fmax_sweep_uniform_near_capacity():
    cfg = SweepConfig("fmax", [0.5, 0.9, 1.0, 1.2], policies=["uniform", "zero-wait"], n_cycles=5000, seed=3)
    t = run_sweep(cfg)
    flags = t.column("uniform_flag")
    assert flags[2:] == [DIVERGENT, DIVERGENT]
    assert flags[0] == FEASIBLE
    assert t.column("zero-wait_flag") == [INFEASIBLE, INFEASIBLE, FEASIBLE, FEASIBLE]
    for r in t.rows:
        if r["uniform_flag"] != FEASIBLE:
            assert r["uniform_mse"] is None and r["uniform_mse_ci95"] is None


def test_sigma_sweep_at_high_fmax():
    cfg = SweepConfig("sigma", [0.25, 1.0], f_max=1.5, n_cycles=20_000, dt=5e-3, seed=11)
    t = run_sweep(cfg)
    for r in t.rows:
        assert r["uniform_flag"] == DIVERGENT and r["uniform_mse"] is None
        assert r["zero-wait_flag"] == FEASIBLE
        zw = r["zero-wait_analytic"]
        assert zw >= r["age-threshold_analytic"] >= r["signal-threshold_analytic"]
        assert r["zero-wait_mse"] > r["signal-threshold_mse"]
        # at small sigma zero-wait is nearly age-optimal, so compare within the combined CI
        slack = math.hypot(r["zero-wait_mse_ci95"], r["age-threshold_mse_ci95"])
        assert r["zero-wait_mse"] >= r["age-threshold_mse"] - slack


def test_simulated_agrees_with_analytic():
    cfg = SweepConfig("fmax", [0.5, 1.5], policies=list(ANALYTIC_POLICIES), n_cycles=20_000, dt=5e-3, seed=5)
    t = run_sweep(cfg)
    for r in t.rows:
        for p in ANALYTIC_POLICIES:
            if r[f"{p}_flag"] == FEASIBLE:
                assert abs(r[f"{p}_mse"] - r[f"{p}_analytic"]) <= 2 * r[f"{p}_mse_ci95"], (p, r.values)


def test_csv_round_trip_and_sidecar(tmp_path):
    out = tmp_path / "sweep.csv"
    cfg = SweepConfig("fmax", [0.3, 1.0, 1.5], n_cycles=2000, dt=1e-2, seed=9, output_path=out)
    t = run_sweep(cfg)
    back = read_sweep_csv(out)
    assert back.columns == t.columns
    assert back.rows == t.rows
    header = out.read_text().splitlines()[0].split(",")
    assert "signal-threshold_mse_ci95" in header and header[0] == "param"
    meta = json.loads(sidecar_path(out).read_text())
    assert meta["seed"] == 9 and meta["config"]["grid"] == [0.3, 1.0, 1.5]
    assert "version" in meta and meta["dt"] == 1e-2


def test_values_have_twelve_digits(tmp_path):
    out = tmp_path / "s.csv"
    run_sweep(SweepConfig("scale", [1.0, 3.0], n_cycles=0, output_path=out))
    row = out.read_text().splitlines()[1].split(",")
    for cell in row:
        if cell and cell[0].isdigit() and "e" not in cell:
            assert len(cell.replace(".", "").lstrip("0")) <= 12


def test_parallel_matches_serial():
    kw = dict(sweep_kind="fmax", grid=[0.5, 1.5], policies=["zero-wait", "age-threshold"], n_cycles=2000,
              dt=1e-2, seed=1)
    assert run_sweep(SweepConfig(**kw, workers=2)).rows == run_sweep(SweepConfig(**kw)).rows


def test_solver_failure_recorded_per_row(monkeypatch):
    import wiener_sampling.experiments as ex

    def boom(*a, **k):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(ex, "solve_beta_mmse", boom)
    t = run_sweep(SweepConfig("fmax", [0.5], n_cycles=0, policies=["signal-threshold", "age-threshold"]))
    assert "no convergence" in t.rows[0]["note"]
    assert t.rows[0]["age-threshold_beta"] is not None


def test_asymptotic_fmax_degenerate_zero():
    rows = asymptotic_report(Degenerate(0.0), [0.01, 0.1, 1.0, 10.0])
    for r in rows:
        assert r.beta_times_f == pytest.approx(1.0, rel=1e-8)
        assert r.mmse_times_6f == pytest.approx(1.0, rel=1e-8)


def test_asymptotic_fmax_exponential():
    rows = asymptotic_report(EXP1, [1e-3, 1e-2, 1e-1])
    assert all(r.within_bound for r in rows)
    small = rows[0]
    assert 1 - 1e-3 <= small.beta_times_f <= 1
    assert small.mmse_times_6f == pytest.approx(1.0, abs=0.01)


def test_asymptotic_scale():
    rows = asymptotic_report(EXP1, [1.0, 10.0], kind="scale")
    assert rows[1].beta_age / rows[0].beta_age == pytest.approx(10.0, rel=1e-8)
    assert rows[1].normalized == pytest.approx(1.0, rel=1e-8)


def test_asymptotic_preconditions():
    with pytest.raises(ValueError, match="two decades"):
        asymptotic_report(EXP1, [0.1, 1.0])
    with pytest.raises(ValueError):
        asymptotic_report(EXP1, [1.0])
    with pytest.raises(ValueError):
        asymptotic_report(EXP1, [1.0, 10.0], kind="sigma")
