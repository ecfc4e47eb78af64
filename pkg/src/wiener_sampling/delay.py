"""Channel-delay distributions.

Every model exposes exact moments, the essential infimum, seeded sampling, and
``expect(g)`` which evaluates E[g(Y)] by adaptive quadrature over the density
(or exact summation over atoms for empirical and degenerate delays).  ``g``
must accept numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

QUAD_EPSREL = 1e-10
_QUAD_LIMIT = 400

ArrayFunc = Callable[[np.ndarray], np.ndarray]


class DelayFileError(ValueError):
    """Raised when an empirical delay file cannot be ingested."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def _quad(func: Callable[[float], float], a: float, b: float) -> float:
    val, _ = integrate.quad(func, a, b, epsabs=1e-300, epsrel=QUAD_EPSREL, limit=_QUAD_LIMIT)
    return val


def _piecewise_quad(func, a: float, b: float, cuts: Sequence[float]) -> float:
    edges = [a] + sorted(c for c in cuts if a < c < b) + [b]
    return sum(_quad(func, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


class DelayModel:
    """Base class of the delay variants. Instances are immutable."""

    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def ess_inf(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def expect(self, g: ArrayFunc, breakpoints: Sequence[float] = ()) -> float:
        """E[g(Y)]. ``breakpoints`` are delay values where g has kinks."""
        raise NotImplementedError

    def is_zero(self) -> bool:
        """True when Y = 0 almost surely."""
        return False

    def describe(self) -> str:
        """Mini-language descriptor, parseable by :func:`parse_delay`."""
        raise NotImplementedError

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2

    def __str__(self) -> str:
        return self.describe()


@dataclass(frozen=True)
class Degenerate(DelayModel):
    y: float

    def __post_init__(self):
        if not (self.y >= 0 and math.isfinite(self.y)):
            raise ValueError(f"degenerate delay must be finite and >= 0, got {self.y}")

    def mean(self):
        return float(self.y)

    def second_moment(self):
        return float(self.y) ** 2

    def ess_inf(self):
        return float(self.y)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.y)
        return np.full(size, float(self.y))

    def expect(self, g, breakpoints=()):
        return float(np.asarray(g(np.array([float(self.y)])))[0])

    def is_zero(self):
        return self.y == 0

    def describe(self):
        return f"det:{self.y:g}"


@dataclass(frozen=True)
class Exponential(DelayModel):
    scale: float = 1.0  # mean delay

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"exponential mean must be finite and > 0, got {self.scale}")

    def mean(self):
        return float(self.scale)

    def second_moment(self):
        return 2.0 * self.scale**2

    def ess_inf(self):
        return 0.0

    def sample(self, rng, size=None):
        out = rng.exponential(self.scale, size)
        return float(out) if size is None else out

    def expect(self, g, breakpoints=()):
        m = self.scale
        f = lambda u: float(g(np.array([m * u]))[0]) * math.exp(-u)
        return _piecewise_quad(f, 0.0, math.inf, [b / m for b in breakpoints] + [1.0, 8.0])

    def describe(self):
        return f"exp:{self.scale:g}"


@dataclass(frozen=True)
class LogNormalNormalized(DelayModel):
    """Y = exp(sigma X) / E[exp(sigma X)] with X standard normal, so E[Y] = 1."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"log-normal sigma must be finite and > 0, got {self.sigma}")

    def mean(self):
        return 1.0

    def second_moment(self):
        return math.exp(self.sigma**2)

    def ess_inf(self):
        return 0.0

    def sample(self, rng, size=None):
        s = self.sigma
        x = rng.standard_normal(size)
        out = np.exp(s * x - 0.5 * s * s)
        return float(out) if size is None else out

    def expect(self, g, breakpoints=()):
        # integrate over X in [-40, 40]; the normal density is below 1e-300 outside
        s = self.sigma
        c = 1.0 / math.sqrt(2.0 * math.pi)

        def f(x):
            return float(g(np.array([math.exp(s * x - 0.5 * s * s)]))[0]) * c * math.exp(-0.5 * x * x)

        cuts = [(math.log(b) + 0.5 * s * s) / s for b in breakpoints if b > 0]
        return _piecewise_quad(f, -40.0, 40.0, cuts + [-8.0, -3.0, 0.0, 3.0, 8.0])

    def describe(self):
        return f"lognorm:{self.sigma:g}"


@dataclass(frozen=True)
class Scaled(DelayModel):
    inner: DelayModel
    d: float

    def __post_init__(self):
        if not (self.d >= 0 and math.isfinite(self.d)):
            raise ValueError(f"scale factor must be finite and >= 0, got {self.d}")

    def mean(self):
        return self.d * self.inner.mean()

    def second_moment(self):
        return self.d**2 * self.inner.second_moment()

    def ess_inf(self):
        return self.d * self.inner.ess_inf()

    def sample(self, rng, size=None):
        out = self.d * self.inner.sample(rng, size)
        return float(out) if size is None else out

    def expect(self, g, breakpoints=()):
        if self.d == 0:
            return float(np.asarray(g(np.zeros(1)))[0])
        d = self.d
        return self.inner.expect(lambda y: g(d * y), [b / d for b in breakpoints])

    def is_zero(self):
        return self.d == 0 or self.inner.is_zero()

    def describe(self):
        return f"scaled:{self.d:g}:{self.inner.describe()}"


@dataclass(frozen=True, eq=False)
class Empirical(DelayModel):
    """Resamples the stored observations i.i.d. with replacement."""

    samples: np.ndarray
    source: str | None = None

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError("empirical delay needs at least one sample")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("empirical delay samples must be finite and >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __eq__(self, other):
        return isinstance(other, Empirical) and np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash(self.samples.tobytes())

    def mean(self):
        return float(np.mean(self.samples))

    def second_moment(self):
        return float(np.mean(self.samples**2))

    def ess_inf(self):
        return float(np.min(self.samples))

    def sample(self, rng, size=None):
        out = rng.choice(self.samples, size)
        return float(out) if size is None else out

    def expect(self, g, breakpoints=()):
        return float(np.mean(g(self.samples)))

    def is_zero(self):
        return not np.any(self.samples)

    def describe(self):
        if self.source:
            return f"file:{self.source}"
        return "empirical:" + ",".join(f"{v:g}" for v in self.samples)


def load_empirical(path) -> Empirical:
    """Read one nonnegative decimal per line; blank trailing lines are ignored."""
    p = Path(path)
    if not p.is_file():
        raise DelayFileError(p, None, "no such file")
    values = []
    text = p.read_text(encoding="utf-8")
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    for lineno, raw in enumerate(lines, start=1):
        token = raw.strip()
        try:
            v = float(token)
        except ValueError:
            raise DelayFileError(p, lineno, f"cannot parse {token!r} as a number") from None
        if not math.isfinite(v):
            raise DelayFileError(p, lineno, f"non-finite value {token!r}")
        if v < 0:
            raise DelayFileError(p, lineno, f"negative delay {v}")
        values.append(v)
    if not values:
        raise DelayFileError(p, None, "file is empty")
    return Empirical(np.array(values), source=str(path))


def parse_delay(text: str) -> DelayModel:
    """Parse ``det:y``, ``exp:mean``, ``lognorm:sigma``, ``scaled:d:inner``, ``file:path``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "det":
            return Degenerate(float(rest))
        if kind == "exp":
            return Exponential(float(rest))
        if kind == "lognorm":
            return LogNormalNormalized(float(rest))
        if kind == "scaled":
            d, _, inner = rest.partition(":")
            return Scaled(parse_delay(inner), float(d))
        if kind == "file":
            return load_empirical(rest)
        if kind == "empirical":
            return Empirical(np.array([float(v) for v in rest.split(",")]))
    except DelayFileError:
        raise
    except ValueError as exc:
        raise ValueError(f"bad delay spec {text!r}: {exc}") from None
    raise ValueError(f"unknown delay kind in {text!r}")
