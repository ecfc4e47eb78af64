"""Command-line frontend: solve, simulate, sweep, verify.

Exit codes: 0 success, 1 usage error, 2 solver failure, 10 + N when N verify
checks fail.  Output is a pure function of the flags and seed apart from the
trailing timestamp line, which ``--no-timestamp`` removes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone

from . import __version__
from .analytics import (
    SolverError,
    solve_beta_age,
    solve_beta_mmse,
    zero_wait_age_optimal,
    zero_wait_mmse_optimal,
)
from .delay import DelayFileError, Exponential, parse_delay
from .experiments import POLICIES, SweepConfig, default_workers, run_sweep
from .kernels import Estimate, FixedTime, TwoSidedExit, default_dt, dt_halving_check, wald_moment_oracle
from .rng import DEFAULT_SEED, derive_seed
from .simulator import (
    AgeThreshold,
    Check,
    SignalThreshold,
    ZeroWait,
    age_equals_mse_for_signal_independent,
    cycle_identity_check,
    parse_policy,
    run_cycles,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 10

DEFAULTS = {
    "delay": "exp:1",
    "fmax": "inf",
    "tol": 1e-9,
    "seed": DEFAULT_SEED,
    "format": "human",
    "output": None,
    "no_timestamp": False,
    "policy": "zero-wait",
    "cycles": None,
    "dt": None,
    "kind": "fmax",
    "grid": None,
    "policies": ",".join(POLICIES),
    "workers": None,
    "runs": 100_000,
}
_CYCLE_DEFAULTS = {"simulate": 100_000, "sweep": 200_000, "verify": 100_000}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmax(text) -> float | None:
    v = float(text)
    if math.isinf(v) and v > 0:
        return None
    if not v > 0:
        raise ValueError("--fmax must be positive or inf")
    return v


def _num(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # defaults are None so a config file can fill anything not given on the command line
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("--delay", help="det:y | exp:mean | lognorm:sigma | scaled:d:inner | file:path")
    common.add_argument("--fmax", help="maximum sampling rate, or inf")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--format", choices=("human", "csv", "json"))
    common.add_argument("--output", help="write the report (sweep: the CSV table) to this path")
    common.add_argument("--no-timestamp", action="store_true", default=None)

    p = _Parser(prog="wiener-sampling", description="Threshold sampling of a Wiener process over a delay channel.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("solve", parents=[common], help="MMSE-optimal and age-optimal thresholds")

    sim = sub.add_parser("simulate", parents=[common], help="simulate one policy")
    sim.add_argument("--policy", help="zero-wait | uniform:T | age-threshold:b|auto | signal-threshold:b|auto")
    sim.add_argument("--cycles", type=int)
    sim.add_argument("--dt", type=float)

    sw = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    sw.add_argument("--kind", choices=("fmax", "sigma", "scale"))
    sw.add_argument("--grid", help="comma-separated grid values")
    sw.add_argument("--policies", help="comma-separated subset of " + ",".join(POLICIES))
    sw.add_argument("--cycles", type=int, help="cycles per policy and point (0: analytic only)")
    sw.add_argument("--dt", type=float)
    sw.add_argument("--workers", type=int, help="parallel grid points (env WIENER_SAMPLING_WORKERS)")

    ver = sub.add_parser("verify", parents=[common], help="stopping-time and cycle identity suites")
    ver.add_argument("--runs", type=int, help="paths per stopping-time suite")
    ver.add_argument("--cycles", type=int)
    ver.add_argument("--dt", type=float)
    return p


def resolve_options(argv) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    given = {k: v for k, v in vars(args).items() if v is not None}
    merged = dict(DEFAULTS)
    merged["cycles"] = _CYCLE_DEFAULTS.get(args.command)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in merged:
                raise UsageError(f"unknown config key {k!r}")
            merged[key] = v
    merged.update(given)
    if merged["workers"] is None:
        merged["workers"] = default_workers()
    return argparse.Namespace(**merged)


# -- output helpers ------------------------------------------------------------------

def _timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _emit(opts, human_lines, payload, csv_rows):
    """Render in the requested format; returns the text."""
    if opts.format == "json":
        if not opts.no_timestamp:
            payload = {**payload, "generated": _timestamp()}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif opts.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in csv_rows:
            w.writerow([_num(v) if v is not None else "" for v in row])
        text = buf.getvalue()
        if not opts.no_timestamp:
            text += f"# generated {_timestamp()}\n"
    else:
        lines = list(human_lines)
        if not opts.no_timestamp:
            lines.append(f"generated: {_timestamp()}")
        text = "\n".join(lines) + "\n"
    return text


def _write(opts, text):
    if opts.output and opts.command != "sweep":
        with open(opts.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _common(opts):
    try:
        model = parse_delay(str(opts.delay))
        f = _fmax(opts.fmax)
    except DelayFileError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not opts.tol > 0:
        raise UsageError("--tol must be positive")
    return model, f


# -- commands ------------------------------------------------------------------------

def cmd_solve(opts) -> int:
    model, f = _common(opts)
    mm = solve_beta_mmse(model, f, opts.tol)
    ag = solve_beta_age(model, f, opts.tol)
    zw_mmse = zero_wait_mmse_optimal(model)
    zw_age = zero_wait_age_optimal(model)
    fm = "inf" if f is None else _num(f)
    human = [f"delay: {model.describe()}", f"f_max: {fm}", f"mean delay: {_num(model.mean())}", f"tol: {_num(opts.tol)}"]
    for title, s in (("mmse-optimal signal-variation threshold", mm), ("age-optimal time-variation threshold", ag)):
        human += [f"{title}:", f"  beta: {_num(s.beta)}", f"  objective: {_num(s.objective)}",
                  f"  binding: {s.binding.value}", f"  residual: {s.residual:.3e}", f"  iterations: {s.iterations}"]
    human += [f"zero-wait-mmse-optimal: {_num(zw_mmse)}", f"zero-wait-age-optimal: {_num(zw_age)}"]
    payload = {"delay": model.describe(), "f_max": fm, "mean_delay": model.mean(), "tol": opts.tol,
               "mmse_optimal": mm.to_dict(), "age_optimal": ag.to_dict(),
               "zero_wait_mmse_optimal": zw_mmse, "zero_wait_age_optimal": zw_age}
    rows = [["solver", "beta", "objective", "binding", "residual", "iterations", "zero_wait_optimal"],
            ["mmse", mm.beta, mm.objective, mm.binding.value, mm.residual, mm.iterations, zw_mmse],
            ["age", ag.beta, ag.objective, ag.binding.value, ag.residual, ag.iterations, zw_age]]
    _write(opts, _emit(opts, human, payload, rows))
    return EXIT_OK


def _resolve_policy(text, model, f, tol):
    kind, _, arg = str(text).partition(":")
    if arg == "auto":
        if kind == "signal-threshold":
            return SignalThreshold(solve_beta_mmse(model, f, tol).beta)
        if kind == "age-threshold":
            return AgeThreshold(solve_beta_age(model, f, tol).beta)
    try:
        return parse_policy(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(opts) -> int:
    model, f = _common(opts)
    policy = _resolve_policy(opts.policy, model, f, opts.tol)
    if opts.cycles is None or opts.cycles < 1000:
        raise UsageError("--cycles must be >= 1000")
    if opts.dt is not None and not opts.dt > 0:
        raise UsageError("--dt must be positive")
    res = run_cycles(policy, model, opts.cycles, opts.dt, opts.seed)
    notes = []
    if f is not None and res.rate.value > f * (1 + 1e-9) + res.rate.half_width:
        notes.append(f"achieved rate exceeds f_max={_num(f)}; the cap is not enforced by the simulator")
    d = res.to_dict()
    d["notes"] = notes
    human = [f"policy: {d['policy']}", f"delay: {d['delay']}", f"seed: {d['seed']}", f"dt: {_num(d['dt'])}",
             f"cycles: {d['n_cycles']} (warm-up {d['warmup']})"]
    for k in ("mse", "age", "rate"):
        human.append(f"{k}: {_num(d[k]['value'])} +/- {_num(d[k]['ci95'])}")
    human += [f"divergent: {_num(d['divergent'])}", f"max queue: {d['max_queue']}"]
    human += [f"note: {n}" for n in notes]
    rows = [["policy", "delay", "seed", "dt", "n_cycles", "mse", "mse_ci95", "age", "age_ci95", "rate",
             "rate_ci95", "divergent", "max_queue"],
            [d["policy"], d["delay"], d["seed"], d["dt"], d["n_cycles"], d["mse"]["value"], d["mse"]["ci95"],
             d["age"]["value"], d["age"]["ci95"], d["rate"]["value"], d["rate"]["ci95"], d["divergent"],
             d["max_queue"]]]
    _write(opts, _emit(opts, human, d, rows))
    return EXIT_OK


def cmd_sweep(opts) -> int:
    model, f = _common(opts)
    try:
        grid = [float(v) for v in str(opts.grid).split(",")] if opts.grid else ()
        policies = [p.strip() for p in str(opts.policies).split(",") if p.strip()]
        cfg = SweepConfig(opts.kind, grid, model, policies, opts.cycles, opts.dt, opts.seed, opts.output, f,
                          opts.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = run_sweep(cfg)
    human = [f"sweep: {cfg.sweep_kind}", f"seed: {cfg.seed}", f"cycles: {cfg.n_cycles}"]
    shown = ["param"] + [c for c in table.columns if c.endswith(("_beta", "_analytic", "_mse", "_flag"))]
    human.append(" ".join(shown))
    for r in table.rows:
        human.append(" ".join("-" if r[c] is None else _num(r[c]) for c in shown))
    if opts.output:
        human.append(f"written: {opts.output}")
    payload = {"config": cfg.to_dict(), "columns": table.columns, "rows": [r.values for r in table.rows]}
    rows = [table.columns] + [[r[c] for c in table.columns] for r in table.rows]
    sys.stdout.write(_emit(opts, human, payload, rows))
    return EXIT_OK


def _richardson(change) -> float:
    """Bias allowance at step dt from the dt -> dt/2 change (first-order bias)."""
    return 2.0 * abs(change.mean) + 4.0 * change.se


def run_verify(opts) -> dict:
    runs, cycles, seed = opts.runs, opts.cycles, opts.seed
    base_dt = default_dt(1.0)
    dt = base_dt if opts.dt is None else opts.dt
    if runs < 10_000:
        raise UsageError("--runs must be >= 10000")
    if cycles < 100_000:
        raise UsageError("--cycles must be >= 100000")
    if not dt > 0:
        raise UsageError("--dt must be positive")
    suites = []

    halving = dt_halving_check(0.0, 1.0, dt, runs, derive_seed(seed, 0))
    coarse = dt > base_dt * (1 + 1e-12)
    a_tau = _richardson(halving.tau_change) if coarse else 0.0
    a_int = _richardson(halving.int_change) if coarse else 0.0
    bridge_ok = halving.tau_ok and halving.int_ok
    suites.append({
        "suite": "bridge-bias",
        "status": "pass" if bridge_ok else "degraded",
        "dt": dt,
        "tau_change": halving.tau_change.mean, "tau_change_se": halving.tau_change.se,
        "int_change": halving.int_change.mean, "int_change_se": halving.int_change.se,
        "combined_error_tau": halving.combined(halving.tau_coarse, halving.tau_fine),
        "combined_error_int": halving.combined(halving.int_coarse, halving.int_fine),
        "checks": [],
    })

    def suite(name, checks):
        suites.append({"suite": name, "status": "pass" if all(c.passed for c in checks) else "fail",
                       "checks": [c.to_dict() for c in checks]})

    wm = wald_moment_oracle(TwoSidedExit(0.0, 1.0), runs, dt, derive_seed(seed, 1))
    ft = wald_moment_oracle(FixedTime(1.0), runs, dt, derive_seed(seed, 2))
    suite("wald-moments", [
        Check("exit +-1: E[tau] = 1", wm.tau, 1.0, allowance=a_tau),
        Check("exit +-1: E[W^2] - E[tau] = 0", wm.wald_identity, 0.0, allowance=a_tau),
        Check("exit +-1: E[int W^2] = 1/6", wm.int_w2, 1 / 6, allowance=a_int),
        Check("exit +-1: E[int W^2] - E[W^4]/6 = 0", wm.stop_identity, 0.0, allowance=a_int),
        Check("fixed T=1: E[W^4] = 3", ft.w4, 3.0),
        Check("fixed T=1: E[int W^2] = 1/2", ft.int_w2, 0.5),
        Check("fixed T=1: E[int W^2] - E[W^4]/6 = 0", ft.stop_identity, 0.0),
    ])

    hit = wald_moment_oracle(TwoSidedExit(0.5, 1.0), runs, dt, derive_seed(seed, 3))
    suite("hitting-expectation", [
        Check("b=0, beta=1: E[tau] = 1", wm.tau, 1.0, allowance=a_tau),
        Check("b=0.5, beta=1: E[tau] = 0.75", hit.tau, 0.75, allowance=a_tau),
    ])

    model = Exponential(1.0)
    pol = SignalThreshold(1.0)
    res = run_cycles(pol, model, cycles, dt, derive_seed(seed, 4))
    rep = cycle_identity_check(res.records, model, pol, min_records=cycles)
    allow = {"mse-integral identity": a_int + a_tau * model.mean(), "mean cycle length": a_tau}
    suite("cycle-identity", [Check(c.name, c.estimate, c.target, c.k, allow.get(c.name, 0.0)) for c in rep.checks])

    checks = []
    for j, p in enumerate((ZeroWait(), AgeThreshold(solve_beta_age(model).beta))):
        r = age_equals_mse_for_signal_independent(p, model, cycles, dt, derive_seed(seed, 5 + j))
        checks.append(Check(f"{p.describe()}: mse - age = 0", _ci_as_se(r.difference, r.combined_ci), 0.0,
                            k=1.959963984540054))
    suite("age-equals-mse", checks)

    failed = sum(not c["passed"] for s in suites for c in s["checks"])
    return {"seed": seed, "dt": dt, "runs": runs, "cycles": cycles, "failed": failed, "suites": suites}


def _ci_as_se(diff, ci):
    return Estimate(diff, ci / 1.959963984540054)


def cmd_verify(opts) -> int:
    rep = run_verify(opts)
    human = [f"seed: {rep['seed']}", f"dt: {_num(rep['dt'])}", f"runs: {rep['runs']}", f"cycles: {rep['cycles']}"]
    rows = [["suite", "check", "estimate", "se", "target", "passed"]]
    for s in rep["suites"]:
        human.append(f"[{s['status'].upper()}] {s['suite']}")
        if s["suite"] == "bridge-bias":
            human.append(f"  E[tau] change on halving dt: {_num(s['tau_change'])} "
                         f"(combined error {_num(s['combined_error_tau'])})")
            human.append(f"  E[int W^2] change on halving dt: {_num(s['int_change'])} "
                         f"(combined error {_num(s['combined_error_int'])})")
            rows.append([s["suite"], "dt halving", s["tau_change"], s["tau_change_se"], 0.0, s["status"] == "pass"])
        for c in s["checks"]:
            mark = "ok" if c["passed"] else "FAIL"
            widened = f", widened by {_num(c['allowance'])}" if c["allowance"] else ""
            human.append(f"  {mark:4} {c['name']}: {_num(c['estimate'])} "
                         f"(se {_num(c['se'])}, target {_num(c['target'])}{widened})")
            rows.append([s["suite"], c["name"], c["estimate"], c["se"], c["target"], c["passed"]])
    human.append(f"failed checks: {rep['failed']}")
    _write(opts, _emit(opts, human, rep, rows))
    return EXIT_OK if rep["failed"] == 0 else EXIT_VERIFY + rep["failed"]


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        opts = resolve_options(argv)
        return COMMANDS[opts.command](opts)
    except UsageError as exc:
        print(f"wiener-sampling: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DelayFileError as exc:
        print(f"wiener-sampling: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"wiener-sampling: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"wiener-sampling: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
