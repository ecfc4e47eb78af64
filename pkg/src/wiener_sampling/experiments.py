"""Parameter sweeps pairing solved thresholds with simulated confirmations.

A sweep walks one parameter (f_max, log-normal sigma, or a delay scale d),
solves both thresholds at each point, simulates the requested policies and
writes one CSV row per point plus a JSON sidecar with the run metadata.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analytics import FrequencyConstraint, mmse_age_value, solve_beta_age, solve_beta_mmse
from .delay import DelayModel, Exponential, LogNormalNormalized, Scaled
from .kernels import default_dt
from .rng import DEFAULT_SEED, derive_seed
from .simulator import AgeThreshold, SignalThreshold, Uniform, ZeroWait, policy_scale, run_cycles

SWEEP_KINDS = ("fmax", "sigma", "scale")
POLICIES = ("signal-threshold", "age-threshold", "zero-wait", "uniform")
FEASIBLE, INFEASIBLE, DIVERGENT = "feasible", "infeasible", "divergent"
SIG_DIGITS = 12
WORKERS_ENV = "WIENER_SAMPLING_WORKERS"

_POLICY_FIELDS = ("beta", "analytic", "mse", "mse_ci95", "age", "age_ci95", "rate", "rate_ci95", "flag")


def default_grid(kind: str) -> list[float]:
    if kind == "fmax":
        return [float(v) for v in np.geomspace(0.01, 2.0, 24)]
    if kind == "sigma":
        return [float(v) for v in np.linspace(0.05, 1.5, 15)]
    if kind == "scale":
        return [float(v) for v in np.geomspace(0.1, 10.0, 9)]
    raise ValueError(f"unknown sweep kind {kind!r}")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class SweepConfig:
    """``f_max`` is the fixed cap for sigma and scale sweeps (None = unbounded)."""

    sweep_kind: str
    grid: Sequence[float] = ()
    model_template: DelayModel = field(default_factory=Exponential)
    policies: Sequence[str] = POLICIES
    n_cycles: int = 200_000
    dt: float | None = None
    seed: int = DEFAULT_SEED
    output_path: str | Path | None = None
    f_max: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}, got {self.sweep_kind!r}")
        self.grid = [float(v) for v in (self.grid or default_grid(self.sweep_kind))]
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.sweep_kind in ("fmax", "sigma") and self.grid[0] <= 0:
            raise ValueError("grid values must be positive")
        if self.sweep_kind == "scale" and self.grid[0] < 0:
            raise ValueError("scale factors must be >= 0")
        self.policies = list(self.policies)
        if not self.policies:
            raise ValueError("at least one policy is required")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ValueError(f"unknown policies {bad}")
        if self.n_cycles and self.n_cycles < 1000:
            raise ValueError("n_cycles must be 0 (analytic only) or >= 1000")
        self.f_max = FrequencyConstraint(self.f_max).f_max

    def model_at(self, value: float) -> DelayModel:
        if self.sweep_kind == "sigma":
            return LogNormalNormalized(value)
        if self.sweep_kind == "scale":
            return Scaled(self.model_template, value)
        return self.model_template

    def fmax_at(self, value: float) -> float | None:
        return value if self.sweep_kind == "fmax" else self.f_max

    def to_dict(self) -> dict:
        return {
            "sweep_kind": self.sweep_kind,
            "model_template": self.model_template.describe(),
            "grid": list(self.grid),
            "policies": list(self.policies),
            "n_cycles": self.n_cycles,
            "dt": self.dt,
            "seed": self.seed,
            "f_max": "inf" if self.f_max is None else self.f_max,
            "output_path": None if self.output_path is None else str(self.output_path),
        }


def _round(v):
    if v is None or isinstance(v, str):
        return v
    v = float(v)
    return float(f"{v:.{SIG_DIGITS}g}") if math.isfinite(v) else v


def columns_for(policies: Sequence[str]) -> list[str]:
    cols = ["param", "mean_delay", "ratio_opt_age"]
    for p in policies:
        cols += [f"{p}_{f}" for f in _POLICY_FIELDS]
    return cols + ["note"]


@dataclass
class SweepRow:
    """One grid point. ``values`` maps column name to float, flag string or None."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        if not isinstance(other, SweepRow) or self.values.keys() != other.values.keys():
            return False
        for k, a in self.values.items():
            b = other.values[k]
            if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
                continue
            if a != b:
                return False
        return True


@dataclass
class SweepTable:
    columns: list[str]
    rows: list[SweepRow]
    dt_used: list[dict] = field(default_factory=list, compare=False)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_cell(r.values[c]) for c in self.columns])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{v:.{SIG_DIGITS}g}"


def _parse_cell(col: str, text: str):
    if text == "":
        return None
    if col.endswith("_flag") or col == "note":
        return text
    return float(text)


def read_sweep_csv(path) -> SweepTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        columns = next(rd)
        rows = [SweepRow({c: _parse_cell(c, t) for c, t in zip(columns, line)}) for line in rd]
    return SweepTable(columns, rows)


# -- per-point work --------------------------------------------------------------

def _simulate(policy, model, cfg: SweepConfig, seed: int):
    dt = cfg.dt if cfg.dt is not None else default_dt(policy_scale(policy), model.mean())
    return run_cycles(policy, model, cfg.n_cycles, dt, seed), dt


def _fill(vals: dict, p: str, res) -> None:
    vals[f"{p}_mse"], vals[f"{p}_mse_ci95"] = res.mse.value, res.mse.half_width
    vals[f"{p}_age"], vals[f"{p}_age_ci95"] = res.age.value, res.age.half_width
    vals[f"{p}_rate"], vals[f"{p}_rate_ci95"] = res.rate.value, res.rate.half_width


def run_point(cfg: SweepConfig, index: int) -> tuple[SweepRow, dict]:
    value = cfg.grid[index]
    model = cfg.model_at(value)
    f = FrequencyConstraint(cfg.fmax_at(value))
    ey = model.mean()
    rate_cap = math.inf if f.is_unbounded else f.f_max
    vals = {c: None for c in columns_for(cfg.policies)}
    vals["param"], vals["mean_delay"] = value, ey
    notes, dts = [], {}

    sol = {}
    for name, solver in (("signal-threshold", solve_beta_mmse), ("age-threshold", solve_beta_age)):
        try:
            sol[name] = solver(model, f)
        except Exception as exc:  # recorded per row, the sweep goes on
            notes.append(f"{name}: {exc}")
    if "signal-threshold" in sol and "age-threshold" in sol and sol["age-threshold"].objective > 0:
        vals["ratio_opt_age"] = sol["signal-threshold"].objective / sol["age-threshold"].objective

    for j, p in enumerate(cfg.policies):
        seed = derive_seed(cfg.seed, index, j)
        flag = FEASIBLE
        policy = None
        if p in sol:
            s = sol[p]
            vals[f"{p}_beta"], vals[f"{p}_analytic"] = s.beta, s.objective
            policy = SignalThreshold(s.beta) if p == "signal-threshold" else AgeThreshold(s.beta)
        elif p == "zero-wait":
            # sampling at every delivery runs at rate 1/E[Y]
            if ey * rate_cap < 1:
                flag = INFEASIBLE
            else:
                vals[f"{p}_analytic"] = mmse_age_value(0.0, model)
                policy = ZeroWait()
        elif p == "uniform":
            if f.is_unbounded:
                flag = INFEASIBLE
            elif ey * f.f_max >= 1:
                flag = DIVERGENT
            else:
                policy = Uniform(1.0 / f.f_max)
        else:
            flag = INFEASIBLE
        if policy is not None and cfg.n_cycles:
            try:
                res, dts[p] = _simulate(policy, model, cfg, seed)
            except ValueError as exc:
                notes.append(f"{p}: {exc}")
            else:
                if res.divergent:
                    flag = DIVERGENT
                else:
                    _fill(vals, p, res)
        if flag != FEASIBLE:
            for fld in _POLICY_FIELDS[:-1]:
                vals[f"{p}_{fld}"] = None
        vals[f"{p}_flag"] = flag
    vals["note"] = "; ".join(notes) or None
    return SweepRow({k: _round(v) for k, v in vals.items()}), dts


def _run_point_star(args):
    return run_point(*args)


def run_sweep(config: SweepConfig) -> SweepTable:
    """Evaluate every grid point; rows come back in grid order."""
    jobs = [(config, i) for i in range(len(config.grid))]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            out = list(ex.map(_run_point_star, jobs))
    else:
        out = [run_point(*j) for j in jobs]
    table = SweepTable(columns_for(config.policies), [r for r, _ in out], [d for _, d in out])
    if config.output_path is not None:
        write_outputs(table, config)
    return table


def sidecar_path(output_path) -> Path:
    return Path(output_path).with_suffix(".json")


def write_outputs(table: SweepTable, config: SweepConfig) -> None:
    path = Path(config.output_path)
    table.write_csv(path)
    meta = {
        "version": __version__,
        "config": config.to_dict(),
        "seed": config.seed,
        "dt": config.dt if config.dt is not None else "default: min(threshold or interval, E[Y], 1)/1000",
        "dt_used": [{"param": v, **d} for v, d in zip(config.grid, table.dt_used)],
        "columns": table.columns,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- asymptotics -------------------------------------------------------------------

@dataclass(frozen=True)
class FmaxAsymptoticRow:
    f_max: float
    beta: float
    beta_times_f: float  # -> 1 as f_max -> 0
    mmse_times_6f: float  # -> 1 as f_max -> 0
    lower_bound: float  # 1 - E[Y] f_max
    within_bound: bool


@dataclass(frozen=True)
class ScaleAsymptoticRow:
    d: float
    beta_age: float
    normalized: float | None  # beta(d) d0 / (d beta(d0)); 1 under linear scaling


def asymptotic_report(model_template: DelayModel, grid: Sequence[float], kind: str = "fmax",
                      tol: float = 1e-9) -> list:
    """Low-rate limits of the MMSE solver, or delay-scale linearity of the age solver."""
    grid = [float(v) for v in grid]
    if len(grid) < 2:
        raise ValueError("need at least two grid points")
    if kind == "fmax":
        if not all(v > 0 for v in grid):
            raise ValueError("f_max values must be positive")
        if max(grid) / min(grid) < 100:
            raise ValueError("f_max grid must span at least two decades")
        ey = model_template.mean()
        rows = []
        for fm in grid:
            s = solve_beta_mmse(model_template, fm, tol)
            bf = s.beta * fm
            lb = 1.0 - ey * fm
            slack = 10 * tol
            rows.append(FmaxAsymptoticRow(fm, s.beta, bf, s.objective * 6 * fm, lb,
                                          lb - slack <= bf <= 1.0 + slack))
        return rows
    if kind == "scale":
        if not all(v > 0 for v in grid):
            raise ValueError("scale factors must be positive")
        d0 = grid[0]
        b0 = solve_beta_age(Scaled(model_template, d0), None, tol).beta
        rows = []
        for d in grid:
            b = solve_beta_age(Scaled(model_template, d), None, tol).beta
            rows.append(ScaleAsymptoticRow(d, b, b * d0 / (d * b0) if b0 > 0 else None))
        return rows
    raise ValueError(f"unknown asymptotic kind {kind!r}")
