"""Closed-form machinery for the MMSE-optimal and age-optimal thresholds.

The signal variation over one channel delay is W_Y, which is Normal(0, y)
given Y = y.  Conditional on Y the two moment functionals reduce to truncated
Gaussian moments, so the outer expectation over Y is a one-dimensional
integral handled by :meth:`DelayModel.expect`.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .delay import DelayModel
from .rng import derive_seed, make_rng

DEFAULT_TOL = 1e-9
MAX_ITER = 200
_BETA_SMALL = 1e-12
_MC_CHUNK = 1_000_000
_MC_DEFAULT_N = 10_000_000


class SolverError(RuntimeError):
    """Bisection failed to meet tolerance; carries the last bracket."""

    def __init__(self, message, bracket=None, residual=None):
        super().__init__(message)
        self.bracket = bracket
        self.residual = residual


class MultipleRootsError(SolverError):
    def __init__(self, brackets):
        super().__init__(f"fixed-point equation changes sign more than once: {brackets}", bracket=brackets)
        self.brackets = brackets


class Binding(str, Enum):
    FREQUENCY = "frequency-constraint"
    STATIONARITY = "unconstrained-stationarity"


@dataclass(frozen=True)
class FrequencyConstraint:
    """Maximum sampling rate; ``f_max=None`` (or inf) means unbounded."""

    f_max: float | None = None

    def __post_init__(self):
        f = self.f_max
        if f is not None and math.isinf(f) and f > 0:
            object.__setattr__(self, "f_max", None)
        elif f is not None and not f > 0:
            raise ValueError(f"f_max must be positive, got {f}")

    @classmethod
    def unbounded(cls) -> "FrequencyConstraint":
        return cls(None)

    @property
    def is_unbounded(self) -> bool:
        return self.f_max is None

    @property
    def min_period(self) -> float:
        """1/f_max, exactly 0 when unbounded."""
        return 0.0 if self.f_max is None else 1.0 / self.f_max

    def __str__(self):
        return "inf" if self.f_max is None else f"{self.f_max:g}"


def _as_constraint(f) -> FrequencyConstraint:
    if isinstance(f, FrequencyConstraint):
        return f
    return FrequencyConstraint(f)


@dataclass(frozen=True)
class ThresholdSolution:
    beta: float
    objective: float
    binding: Binding
    residual: float
    iterations: int
    lhs: float = math.nan
    rhs: float = math.nan

    def to_dict(self):
        return {
            "beta": self.beta,
            "objective": self.objective,
            "binding": self.binding.value,
            "residual": self.residual,
            "iterations": self.iterations,
        }


# -- conditional moments given Y = y ------------------------------------------

def cond_max_w2(beta: float, y):
    """E[max(beta, y Z^2)] for standard normal Z, vectorized over y."""
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, float(beta))
    pos = y > 0
    if beta <= 0:
        out[pos] = y[pos]
        return out
    yp = y[pos]
    c = np.sqrt(beta / yp)
    tail = special.ndtr(-c)  # P(Z > c)
    pdf = np.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
    out[pos] = beta * (1 - 2 * tail) + yp * (2 * c * pdf + 2 * tail)
    return out


def cond_max_w4(beta: float, y):
    """E[max(beta^2, y^2 Z^4)] for standard normal Z, vectorized over y."""
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, float(beta) ** 2)
    pos = y > 0
    if beta <= 0:
        out[pos] = 3 * y[pos] ** 2
        return out
    yp = y[pos]
    c = np.sqrt(beta / yp)
    tail = special.ndtr(-c)
    pdf = np.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
    out[pos] = beta**2 * (1 - 2 * tail) + yp**2 * 2 * ((c**3 + 3 * c) * pdf + 3 * tail)
    return out


# -- moment functionals ---------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloMoments:
    """Paired-draw estimates of E[max(b, W_Y^2)] and E[max(b^2, W_Y^4)]."""

    beta: float
    n: int
    max_w2: float
    max_w2_se: float
    max_w4: float
    max_w4_se: float


def _check_beta(beta):
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta}")


def _mc_streams(model: DelayModel, n: int, seed: int):
    """Yield chunks of (Y, W_Y) pairs."""
    rng = make_rng(seed)
    done = 0
    while done < n:
        m = min(_MC_CHUNK, n - done)
        y = model.sample(rng, m)
        z = rng.standard_normal(m)
        yield y, np.sqrt(y) * z
        done += m


def _chunked_mean(chunks) -> tuple[np.ndarray, np.ndarray, int]:
    s = s2 = None
    n = 0
    for vals in chunks:
        vals = np.atleast_2d(vals)
        cs, cs2 = vals.sum(axis=1), (vals**2).sum(axis=1)
        s = cs if s is None else s + cs
        s2 = cs2 if s2 is None else s2 + cs2
        n += vals.shape[1]
    mean = s / n
    var = np.maximum(s2 / n - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n), n


def mc_wy_moments(beta: float, model: DelayModel, n: int = _MC_DEFAULT_N, seed: int = 0) -> MonteCarloMoments:
    """Independent Monte Carlo oracle for both moment functionals."""
    _check_beta(beta)

    def chunks():
        for _, w in _mc_streams(model, n, seed):
            w2 = w * w
            yield np.vstack([np.maximum(beta, w2), np.maximum(beta * beta, w2 * w2)])

    mean, se, count = _chunked_mean(chunks())
    return MonteCarloMoments(beta, count, mean[0], se[0], mean[1], se[1])


def _default_mc_seed(model: DelayModel) -> int:
    return derive_seed(0, zlib.crc32(model.describe().encode()))


def e_max_beta_wy2(beta: float, model: DelayModel, method: str = "quadrature",
                   n: int = _MC_DEFAULT_N, seed: int | None = None) -> float:
    """E[max(beta, W_Y^2)]."""
    _check_beta(beta)
    if method == "quadrature":
        return model.expect(lambda y: cond_max_w2(beta, y))
    if method == "monte-carlo":
        return mc_wy_moments(beta, model, n, _default_mc_seed(model) if seed is None else seed).max_w2
    raise ValueError(f"unknown method {method!r}")


def e_max_beta2_wy4(beta: float, model: DelayModel, method: str = "quadrature",
                    n: int = _MC_DEFAULT_N, seed: int | None = None) -> float:
    """E[max(beta^2, W_Y^4)]; equals 3 E[Y^2] at beta = 0."""
    _check_beta(beta)
    if method == "quadrature":
        return model.expect(lambda y: cond_max_w4(beta, y))
    if method == "monte-carlo":
        return mc_wy_moments(beta, model, n, _default_mc_seed(model) if seed is None else seed).max_w4
    raise ValueError(f"unknown method {method!r}")


def e_max_beta_y(beta: float, model: DelayModel) -> float:
    """E[max(beta, Y)]."""
    _check_beta(beta)
    return model.expect(lambda y: np.maximum(beta, y), breakpoints=(beta,) if beta > 0 else ())


def e_max_beta2_y2(beta: float, model: DelayModel) -> float:
    """E[max(beta^2, Y^2)]."""
    _check_beta(beta)
    return model.expect(lambda y: np.maximum(beta * beta, y * y), breakpoints=(beta,) if beta > 0 else ())


# -- fixed-point solver -------------------------------------------------------------

class _FixedPoint:
    """g(b) = lhs(b) - max(period, quad(b) / (2b)) with the b -> 0 limit handled."""

    def __init__(self, lhs: Callable[[float], float], quad: Callable[[float], float],
                 period: float, degenerate_zero: bool):
        self.lhs = lhs
        self.quad = quad
        self.period = period
        self.degenerate_zero = degenerate_zero
        self.evaluations = 0

    def ratio(self, b: float) -> float:
        if b < _BETA_SMALL:
            return b / 2 if self.degenerate_zero else math.inf
        return self.quad(b) / (2 * b)

    def sides(self, b: float) -> tuple[float, float]:
        self.evaluations += 1
        return self.lhs(b), max(self.period, self.ratio(b))

    def g(self, b: float) -> float:
        left, right = self.sides(b)
        return left - right


def _bisect(fp: _FixedPoint, scale: float, tol: float, max_iter: int):
    """Return (beta, iterations). Raises SolverError / MultipleRootsError."""
    if fp.degenerate_zero and fp.period == 0.0:
        return 0.0, 0
    hi = max(fp.period, scale, 1e-12)
    g_hi = fp.g(hi)
    doublings = 0
    while g_hi <= 0:
        hi *= 2
        doublings += 1
        if doublings > max_iter:
            raise SolverError("no sign change found while expanding the bracket", bracket=(0.0, hi), residual=g_hi)
        g_hi = fp.g(hi)

    # sign-change scan on a geometric grid below hi; g(0+) < 0 by construction
    grid = hi * np.geomspace(1e-6, 1.0, 25)
    positive = [fp.g(float(b)) > 0 for b in grid]
    changes = [k for k in range(len(grid) - 1) if positive[k] != positive[k + 1]]
    if len(changes) + int(positive[0]) > 1:
        edges = [0.0] + [float(b) for b in grid]
        flips = [0] if positive[0] else []
        flips += [k + 1 for k in changes]
        raise MultipleRootsError([(edges[k], edges[k + 1]) for k in flips])
    if positive[0]:
        lo, hi = 0.0, float(grid[0])
    else:
        lo, hi = float(grid[changes[0]]), float(grid[changes[0] + 1])

    best_b, best_res = hi, math.inf
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        left, right = fp.sides(mid)
        res = abs(left - right) / right if right > 0 else abs(left - right)
        if res < best_res:
            best_b, best_res = mid, res
        if left - right > 0:
            hi = mid
        else:
            lo = mid
        if res <= tol and (hi - lo) <= tol * max(hi, 1e-300):
            return best_b, it
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if best_res <= tol:
        return best_b, it
    raise SolverError(f"bisection stalled with residual {best_res:.3e}", bracket=(lo, hi), residual=best_res)


def _solution(fp: _FixedPoint, beta: float, iterations: int, objective: float) -> ThresholdSolution:
    left, right = fp.sides(beta)
    residual = abs(left - right) / right if right > 0 else abs(left - right)
    binding = Binding.FREQUENCY if fp.period > 0 and fp.period >= fp.ratio(beta) else Binding.STATIONARITY
    return ThresholdSolution(beta, objective, binding, residual, iterations, left, right)


def solve_beta_mmse(model: DelayModel, f=None, tol: float = DEFAULT_TOL,
                    max_iter: int = MAX_ITER) -> ThresholdSolution:
    """Threshold of the MMSE-optimal signal-variation policy.

    Solves E[max(b, W_Y^2)] = max(1/f_max, E[max(b^2, W_Y^4)] / (2b)) by bisection.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    f = _as_constraint(f)
    fp = _FixedPoint(lambda b: e_max_beta_wy2(b, model), lambda b: e_max_beta2_wy4(b, model),
                     f.min_period, model.is_zero())
    beta, it = _bisect(fp, model.mean(), tol, max_iter)
    return _solution(fp, beta, it, mmse_opt_value(beta, model))


def solve_beta_age(model: DelayModel, f=None, tol: float = DEFAULT_TOL,
                   max_iter: int = MAX_ITER) -> ThresholdSolution:
    """Threshold of the age-optimal time-variation policy.

    Solves E[max(b, Y)] = max(1/f_max, E[max(b^2, Y^2)] / (2b)) by bisection.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    f = _as_constraint(f)
    fp = _FixedPoint(lambda b: e_max_beta_y(b, model), lambda b: e_max_beta2_y2(b, model),
                     f.min_period, model.is_zero())
    beta, it = _bisect(fp, model.mean(), tol, max_iter)
    return _solution(fp, beta, it, mmse_age_value(beta, model))


def mmse_opt_value(beta: float, model: DelayModel) -> float:
    """E[max(b^2, W_Y^4)] / (6 E[max(b, W_Y^2)]) + E[Y]."""
    _check_beta(beta)
    den = e_max_beta_wy2(beta, model)
    if den == 0:
        return model.mean()
    return e_max_beta2_wy4(beta, model) / (6 * den) + model.mean()


def mmse_age_value(beta: float, model: DelayModel) -> float:
    """E[max(b^2, Y^2)] / (2 E[max(b, Y)]) + E[Y]."""
    _check_beta(beta)
    den = e_max_beta_y(beta, model)
    if den == 0:
        return model.mean()
    return e_max_beta2_y2(beta, model) / (2 * den) + model.mean()


def mmse_residual_mc(beta: float, model: DelayModel, f, n: int = _MC_DEFAULT_N,
                     seed: int = 0, binding: Binding | None = None) -> tuple[float, float]:
    """Monte Carlo estimate (value, standard error) of the MMSE fixed-point mismatch.

    ``binding`` selects the branch of the outer max; by default the branch is the
    one active at ``beta`` according to the Monte Carlo ratio estimate.
    """
    f = _as_constraint(f)
    period = f.min_period

    def chunks():
        for _, w in _mc_streams(model, n, seed):
            w2 = w * w
            yield np.vstack([np.maximum(beta, w2), np.maximum(beta * beta, w2 * w2) / (2 * beta)])

    mean, _, _ = _chunked_mean(chunks())
    use_freq = binding == Binding.FREQUENCY if binding else period >= mean[1]

    def diffs():
        for _, w in _mc_streams(model, n, seed):
            w2 = w * w
            a = np.maximum(beta, w2)
            yield a - period if use_freq else a - np.maximum(beta * beta, w2 * w2) / (2 * beta)

    m, se, _ = _chunked_mean(diffs())
    return float(m[0]), float(se[0])


def age_residual_mc(beta: float, model: DelayModel, f, n: int = _MC_DEFAULT_N,
                    seed: int = 0, binding: Binding | None = None) -> tuple[float, float]:
    """Monte Carlo estimate (value, standard error) of the age fixed-point mismatch."""
    f = _as_constraint(f)
    period = f.min_period
    rng = make_rng(seed)
    y = model.sample(rng, n)
    a = np.maximum(beta, y)
    r = np.maximum(beta * beta, y * y) / (2 * beta)
    use_freq = binding == Binding.FREQUENCY if binding else period >= r.mean()
    d = a - period if use_freq else a - r
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n))


# -- zero-wait criteria and asymptotics -------------------------------------------

def zero_wait_age_optimal(model: DelayModel) -> bool:
    """Zero-wait minimizes the age (unbounded rate) iff E[Y^2] <= 2 ess_inf(Y) E[Y]."""
    return model.second_moment() <= 2 * model.ess_inf() * model.mean()


def zero_wait_mmse_optimal(model: DelayModel) -> bool:
    """Zero-wait minimizes the MMSE (unbounded rate) iff Y = 0 almost surely."""
    return model.is_zero()


def small_fmax_ratio(model: DelayModel, f_max_sequence: Sequence[float],
                     tol: float = DEFAULT_TOL) -> list[float]:
    """mmse_opt / mmse_age_opt at each f_max; tends to 1/3 as f_max -> 0."""
    out = []
    for fm in f_max_sequence:
        if not fm > 0:
            raise ValueError("f_max values must be positive")
        mo = solve_beta_mmse(model, fm, tol).objective
        ma = solve_beta_age(model, fm, tol).objective
        out.append(mo / ma)
    return out
