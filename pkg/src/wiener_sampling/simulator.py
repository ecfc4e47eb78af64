"""Discrete-event simulation of sampler -> FIFO channel -> MMSE estimator.

The estimator holds the freshest delivered sample, so on the delivery interval
[D_i, D_{i+1}] the squared error is (W_t - W_{S_i})^2 and the age is t - S_i.

Signal-independent and threshold policies never sample while the channel is
busy, so cycles are simulated as independent batches: every delay segment at
once, then every waiting segment.  Uniform sampling can queue and runs an
explicit FIFO queue over a merged event grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .analytics import e_max_beta2_wy4, e_max_beta2_y2, e_max_beta_wy2, e_max_beta_y
from .delay import DelayModel
from .kernels import Estimate, advance_fixed_batch, default_dt, simulate_hitting_batch
from .rng import DEFAULT_SEED, make_rng

MIN_CYCLES = 1000
N_BATCHES = 30
DEFAULT_QUEUE_CAP = 1000


# -- policies -----------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    interval: float

    def __post_init__(self):
        if not (self.interval > 0 and math.isfinite(self.interval)):
            raise ValueError(f"uniform interval must be finite and > 0, got {self.interval}")

    def describe(self):
        return f"uniform:{self.interval:g}"


@dataclass(frozen=True)
class ZeroWait:
    def describe(self):
        return "zero-wait"


@dataclass(frozen=True)
class AgeThreshold:
    beta: float  # seconds since generation

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"threshold must be finite and >= 0, got {self.beta}")

    def describe(self):
        return f"age-threshold:{self.beta:.12g}"


@dataclass(frozen=True)
class SignalThreshold:
    beta: float  # squared signal variation

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"threshold must be finite and >= 0, got {self.beta}")

    def describe(self):
        return f"signal-threshold:{self.beta:.12g}"


PolicySpec = Uniform | ZeroWait | AgeThreshold | SignalThreshold
SIGNAL_INDEPENDENT = (Uniform, ZeroWait, AgeThreshold)


def parse_policy(text: str) -> PolicySpec:
    """``zero-wait``, ``uniform:T``, ``age-threshold:b``, ``signal-threshold:b``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    if kind == "zero-wait" and not arg:
        return ZeroWait()
    ctor = {"uniform": Uniform, "age-threshold": AgeThreshold, "signal-threshold": SignalThreshold}.get(kind)
    if ctor is None or not arg:
        raise ValueError(f"bad policy spec {text!r}")
    try:
        return ctor(float(arg))
    except ValueError as exc:
        raise ValueError(f"bad policy spec {text!r}: {exc}") from None


def policy_scale(policy: PolicySpec) -> float:
    """The time/variance scale the policy acts on, used for the default step."""
    if isinstance(policy, Uniform):
        return policy.interval
    if isinstance(policy, (AgeThreshold, SignalThreshold)):
        return policy.beta
    return 0.0


# -- results ------------------------------------------------------------------------

@dataclass
class CycleRecords:
    """One entry per delivery interval [D_i, D_{i+1}].

    For the cycle policies ``y`` is the delay of sample i and ``z`` the wait
    after its delivery.  Under uniform sampling ``y`` is the service time of
    sample i+1 and ``z`` the idle time before it, so y + z is still the
    interval length.
    """

    y: np.ndarray
    z: np.ndarray
    delta_w_end: np.ndarray
    mse_integral: np.ndarray
    age_integral: np.ndarray

    def __len__(self):
        return len(self.y)

    def __getitem__(self, sl):
        return CycleRecords(self.y[sl], self.z[sl], self.delta_w_end[sl], self.mse_integral[sl],
                            self.age_integral[sl])

    @property
    def length(self) -> np.ndarray:
        return self.y + self.z


@dataclass(frozen=True)
class Interval:
    value: float
    half_width: float

    def contains(self, target: float, inflate: float = 1.0) -> bool:
        return abs(self.value - target) <= inflate * self.half_width

    def to_dict(self):
        return {"value": self.value, "ci95": self.half_width}


@dataclass
class SimulationResult:
    policy: PolicySpec
    delay: str
    n_cycles: int
    seed: int | None
    dt: float
    mse: Interval
    age: Interval
    rate: Interval
    warmup: int
    divergent: bool = False
    max_queue: int = 0
    records: CycleRecords | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.describe(),
            "delay": self.delay,
            "n_cycles": self.n_cycles,
            "warmup": self.warmup,
            "seed": self.seed,
            "dt": self.dt,
            "mse": self.mse.to_dict(),
            "age": self.age.to_dict(),
            "rate": self.rate.to_dict(),
            "divergent": self.divergent,
            "max_queue": self.max_queue,
        }


def _t_quantile(n_batches: int) -> float:
    return float(stats.t.ppf(0.975, n_batches - 1))


def _batch_sums(x: np.ndarray, n_batches: int) -> np.ndarray:
    # equal batches; a remainder of fewer than n_batches records is dropped
    m = len(x) // n_batches
    return x[: m * n_batches].reshape(n_batches, m).sum(axis=1)


def ratio_interval(num: np.ndarray, den: np.ndarray, n_batches: int = N_BATCHES) -> Interval:
    """sum(num)/sum(den) with a batch-means 95% half-width."""
    total = float(np.sum(den))
    if not total > 0:
        raise ValueError("simulated cycles have zero total length")
    value = float(np.sum(num)) / total
    if len(num) < n_batches:
        return Interval(value, math.inf)
    r = _batch_sums(num, n_batches) / _batch_sums(den, n_batches)
    return Interval(value, _t_quantile(n_batches) * float(np.std(r, ddof=1)) / math.sqrt(n_batches))


def batch_mean(x: np.ndarray, n_batches: int = N_BATCHES) -> Estimate:
    """Mean of x with a batch-means standard error (robust to short-range correlation)."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    if m == 0:
        raise ValueError(f"need at least {n_batches} records")
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return Estimate(float(np.mean(x)), float(np.std(b, ddof=1)) / math.sqrt(n_batches))


def warmup_count(n_cycles: int) -> int:
    return max(n_cycles // 100, 100)


# -- simulation ---------------------------------------------------------------------

def _cycle_records(policy, model: DelayModel, n: int, dt: float, rng) -> CycleRecords:
    y = np.asarray(model.sample(rng, n + 1), dtype=float)
    seg = advance_fixed_batch(y, dt, rng)
    e = seg.end[:n]
    if isinstance(policy, ZeroWait):
        z = np.zeros(n)
        delta = e.copy()
        wait = np.zeros(n)
    elif isinstance(policy, AgeThreshold):
        z = np.maximum(policy.beta - y[:n], 0.0)
        w = advance_fixed_batch(z, dt, rng)
        delta = e + w.end
        wait = w.integral_sq(e)
    else:
        # threshold test disabled while the channel is busy: starts from the offset at delivery
        hb = simulate_hitting_batch(e, math.sqrt(policy.beta), dt, rng)
        z = hb.tau
        delta = hb.exit_value
        wait = hb.integral_w2_from_offset
    nxt = slice(1, n + 1)
    mse = wait + delta**2 * y[nxt] + 2.0 * delta * seg.int_b[nxt] + seg.int_b2[nxt]
    age = 0.5 * ((y[:n] + z + y[nxt]) ** 2 - y[:n] ** 2)
    return CycleRecords(y[:n], z, delta, mse, age)


@numba.njit(cache=True)
def _lindley(s, y):
    n = s.shape[0]
    g = np.empty(n)
    d = np.empty(n)
    prev = -np.inf
    for k in range(n):
        g[k] = max(s[k], prev)
        d[k] = g[k] + y[k]
        prev = d[k]
    return g, d


def _uniform_records(policy: Uniform, model: DelayModel, n: int, dt: float, rng):
    s = policy.interval * np.arange(n + 1, dtype=float)
    y = np.asarray(model.sample(rng, n + 1), dtype=float)
    g, d = _lindley(s, y)

    # W on the merged grid of generation and delivery instants
    times = np.concatenate([s, d])
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    gaps = np.diff(t_sorted)
    seg = advance_fixed_batch(gaps, dt, rng)
    w_sorted = np.concatenate([[0.0], np.cumsum(seg.end)])
    w_at = np.empty_like(w_sorted)
    w_at[order] = w_sorted
    w_s = w_at[: n + 1]

    # gap j lies in delivery interval k when D_k <= t_j < D_{k+1}
    start = t_sorted[:-1]
    k = np.searchsorted(d, start, side="right") - 1
    keep = (k >= 0) & (k < n)
    k = k[keep]
    a = w_sorted[:-1][keep] - w_s[k]
    contrib = a * a * gaps[keep] + 2.0 * a * seg.int_b[keep] + seg.int_b2[keep]
    mse = np.bincount(k, weights=contrib, minlength=n)

    idle = g[1:] - d[:n]
    age = 0.5 * ((d[1:] - s[:n]) ** 2 - (d[:n] - s[:n]) ** 2)
    recs = CycleRecords(y[1:].copy(), idle, np.diff(w_s), mse, age)

    # samples already in the system (queued or in service) when sample k is generated
    done = np.minimum(np.searchsorted(d, s, side="right"), np.arange(n + 1))
    qlen = np.arange(n + 1) - done
    return recs, qlen


def run_cycles(policy: PolicySpec, model: DelayModel, n_cycles: int, dt: float | None = None,
               seed=DEFAULT_SEED, queue_cap: int = DEFAULT_QUEUE_CAP) -> SimulationResult:
    """Simulate ``n_cycles`` delivery intervals and return time averages.

    The first max(1%, 100) intervals are warm-up and excluded from the
    averages; they stay in ``records``.
    """
    if n_cycles < MIN_CYCLES:
        raise ValueError(f"n_cycles must be >= {MIN_CYCLES}")
    if dt is None:
        dt = default_dt(policy_scale(policy), model.mean())
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = make_rng(seed)
    warm = warmup_count(n_cycles)
    divergent = False
    max_queue = 0
    if isinstance(policy, Uniform):
        recs, qlen = _uniform_records(policy, model, n_cycles, dt, rng)
        max_queue = int(qlen.max())
        emptied = bool(np.any(qlen[warm + 1:] == 0))
        divergent = max_queue > queue_cap or not emptied
    elif isinstance(policy, (ZeroWait, AgeThreshold, SignalThreshold)):
        recs = _cycle_records(policy, model, n_cycles, dt, rng)
    else:
        raise TypeError(f"unknown policy {policy!r}")
    body = recs[warm:]
    length = body.length
    ones = np.ones(len(body))
    return SimulationResult(
        policy=policy,
        delay=model.describe(),
        n_cycles=n_cycles,
        seed=seed if isinstance(seed, int) else None,
        dt=float(dt),
        mse=ratio_interval(body.mse_integral, length),
        age=ratio_interval(body.age_integral, length),
        rate=ratio_interval(ones, length),
        warmup=warm,
        divergent=divergent,
        max_queue=max_queue,
        records=recs,
    )


# -- identity checks ----------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    estimate: Estimate
    target: float
    k: float = 4.0
    allowance: float = 0.0  # extra slack for known discretization bias

    @property
    def passed(self) -> bool:
        slack = self.k * self.estimate.se + self.allowance + 1e-12 * max(1.0, abs(self.target))
        return abs(self.estimate.mean - self.target) <= slack

    def to_dict(self):
        return {"name": self.name, "estimate": self.estimate.mean, "se": self.estimate.se,
                "target": self.target, "allowance": self.allowance, "passed": self.passed}


@dataclass(frozen=True)
class Report:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> int:
        return sum(not c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def cycle_identity_check(records: CycleRecords, model: DelayModel, policy: PolicySpec,
                         min_records: int = 100_000, k: float = 4.0) -> Report:
    """Renewal identities on the per-cycle records of a cycle policy.

    Checks mean(mse_integral) = mean(delta^4)/6 + mean(y+z) E[Y] on paired
    records, then the policy's closed forms for mean(y+z) and mean(delta^4).
    Cycles are i.i.d. here, so warm-up records are kept.
    """
    if isinstance(policy, Uniform):
        raise ValueError("cycle identities need a policy that waits for delivery")
    if len(records) < min_records:
        raise ValueError(f"need at least {min_records} records, got {len(records)}")
    ey = model.mean()
    d4 = records.delta_w_end**4
    length = records.length
    checks = [Check("mse-integral identity",
                    batch_mean(records.mse_integral - d4 / 6.0 - length * ey), 0.0, k)]
    if isinstance(policy, SignalThreshold):
        b = policy.beta
        checks += [Check("mean cycle length", batch_mean(length), e_max_beta_wy2(b, model), k),
                   Check("mean fourth power of increment", batch_mean(d4), e_max_beta2_wy4(b, model), k)]
    elif isinstance(policy, AgeThreshold):
        b = policy.beta
        checks += [Check("mean cycle length", batch_mean(length), e_max_beta_y(b, model), k),
                   Check("mean fourth power of increment", batch_mean(d4), 3.0 * e_max_beta2_y2(b, model), k)]
    else:
        checks += [Check("mean cycle length", batch_mean(length), ey, k),
                   Check("mean fourth power of increment", batch_mean(d4), 3.0 * model.second_moment(), k)]
    return Report(tuple(checks))


@dataclass(frozen=True)
class AgeMseReport:
    result: SimulationResult
    difference: float
    combined_ci: float

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= self.combined_ci

    def to_dict(self):
        return {"passed": self.passed, "mse": self.result.mse.to_dict(), "age": self.result.age.to_dict(),
                "difference": self.difference, "combined_ci95": self.combined_ci}


def age_equals_mse_for_signal_independent(policy: PolicySpec, model: DelayModel, n_cycles: int,
                                          dt: float | None = None, seed=DEFAULT_SEED) -> AgeMseReport:
    """Simulated time-average squared error equals time-average age."""
    if not isinstance(policy, SIGNAL_INDEPENDENT):
        raise ValueError("age equals MSE only for signal-independent policies")
    res = run_cycles(policy, model, n_cycles, dt, seed)
    return AgeMseReport(res, res.mse.value - res.age.value, math.hypot(res.mse.half_width, res.age.half_width))
