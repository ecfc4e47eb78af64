"""Wiener-path primitives: fixed-duration segments and two-sided first passage.

Paths are Euler grids of step ``dt`` fed by normals drawn in blocks from a
numpy ``Generator``; numba kernels consume the blocks and can resume when a
block runs dry, so results depend only on (seed, dt, parameters).

First passage uses a Brownian-bridge crossing test inside every step: a step
from x1 to x2 that stays inside (-a, a) still crosses the upper barrier with
probability exp(-2 (a - x1)(a - x2) / dt), and likewise the lower one.  On any
crossing the path exits exactly at the barrier.  Bridge crossings are placed
uniformly in the step; endpoint crossings by linear interpolation.
Squared-signal integrals use the trapezoid rule on the same grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .rng import make_rng

MAX_STEPS = 10**10
_BLOCK = 1 << 22
# exp(-2 * 20) ~ 4e-18: bridge test skipped when both barriers are this far
_BRIDGE_CUT = 20.0


@dataclass(frozen=True)
class PathSegment:
    """Discretized Wiener path over a fixed duration.

    ``increments`` has one entry per step; all but possibly the last step have
    length ``dt``.
    """

    dt: float
    duration: float
    increments: np.ndarray
    start: float = 0.0
    anchor: float = 0.0

    @property
    def steps(self) -> np.ndarray:
        n = len(self.increments)
        h = np.full(n, self.dt)
        if n:
            h[-1] = self.duration - self.dt * (n - 1)
        return h

    @property
    def values(self) -> np.ndarray:
        return self.start + np.concatenate([[0.0], np.cumsum(self.increments)])

    @property
    def running_value(self) -> float:
        return float(self.start + np.sum(self.increments))

    @property
    def end_offset(self) -> float:
        return self.running_value - self.anchor

    @property
    def integral_sq(self) -> float:
        """Trapezoid estimate of the integral of (W - anchor)^2."""
        v = self.values - self.anchor
        return float(np.sum(0.5 * (v[:-1] ** 2 + v[1:] ** 2) * self.steps))


@dataclass(frozen=True)
class HittingResult:
    tau: float
    exit_value: float
    integral_w2: float  # integral of (x_t - start)^2, i.e. of the fresh Wiener increment
    integral_w2_from_offset: float  # integral of x_t^2, x measured from the anchor
    steps: int = 0


@dataclass
class HittingBatch:
    start: np.ndarray
    tau: np.ndarray
    exit_value: np.ndarray
    integral_w2: np.ndarray
    integral_w2_from_offset: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return len(self.tau)

    def __getitem__(self, k) -> HittingResult:
        return HittingResult(float(self.tau[k]), float(self.exit_value[k]), float(self.integral_w2[k]),
                             float(self.integral_w2_from_offset[k]), int(self.steps[k]))


@dataclass
class FixedBatch:
    """End value and trapezoid integrals of B and B^2 for segments starting at 0."""

    duration: np.ndarray
    end: np.ndarray
    int_b: np.ndarray
    int_b2: np.ndarray

    def integral_sq(self, offset) -> np.ndarray:
        """Trapezoid integral of (offset + B)^2 over each segment."""
        offset = np.asarray(offset, dtype=float)
        return offset**2 * self.duration + 2 * offset * self.int_b + self.int_b2


def default_dt(*scales: float) -> float:
    """min(positive scales, 1) / 1000, floored at 1e-6."""
    pos = [s for s in scales if s > 0 and math.isfinite(s)]
    return max(min(pos + [1.0]) / 1000.0, 1e-6)


# -- fixed-duration segments -----------------------------------------------------

def _split_duration(durations: np.ndarray, dt: float):
    n_full = np.floor(durations / dt).astype(np.int64)
    rem = durations - n_full * dt
    tiny = rem <= 1e-12 * dt
    rem = np.where(tiny, 0.0, rem)
    counts = n_full + (~tiny)
    return n_full, rem, counts


@numba.njit(cache=True)
def _fixed_kernel(n_full, rem, dt, normals, end, int_b, int_b2):
    sq = math.sqrt(dt)
    p = 0
    for k in range(n_full.shape[0]):
        x = 0.0
        i1 = 0.0
        i2 = 0.0
        for _ in range(n_full[k]):
            x2 = x + sq * normals[p]
            p += 1
            i1 += 0.5 * (x + x2) * dt
            i2 += 0.5 * (x * x + x2 * x2) * dt
            x = x2
        if rem[k] > 0.0:
            x2 = x + math.sqrt(rem[k]) * normals[p]
            p += 1
            i1 += 0.5 * (x + x2) * rem[k]
            i2 += 0.5 * (x * x + x2 * x2) * rem[k]
            x = x2
        end[k] = x
        int_b[k] = i1
        int_b2[k] = i2
    return p


def advance_fixed_batch(durations, dt: float, rng, block: int = _BLOCK) -> FixedBatch:
    """Simulate independent Wiener segments of the given durations from 0."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    durations = np.ascontiguousarray(durations, dtype=float)
    if np.any(durations < 0):
        raise ValueError("durations must be >= 0")
    rng = make_rng(rng)
    n = durations.shape[0]
    end, i1, i2 = np.zeros(n), np.zeros(n), np.zeros(n)
    n_full, rem, counts = _split_duration(durations, dt)
    csum = np.cumsum(counts)
    k = 0
    while k < n:
        base = csum[k - 1] if k else 0
        # take as many segments as fit in one block (at least one)
        stop = max(int(np.searchsorted(csum, base + block, side="right")), k + 1)
        need = int(csum[stop - 1] - base)
        normals = rng.standard_normal(need)
        _fixed_kernel(n_full[k:stop], rem[k:stop], dt, normals, end[k:stop], i1[k:stop], i2[k:stop])
        k = stop
    return FixedBatch(durations, end, i1, i2)


def advance_fixed(duration: float, dt: float, rng, anchor: float = 0.0, start: float | None = None) -> PathSegment:
    """Simulate W over [0, duration] with steps dt (the last one partial).

    The path starts at ``start`` (default: ``anchor``); integrals and end offset
    are measured relative to ``anchor``.
    """
    if not duration >= 0:
        raise ValueError("duration must be >= 0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = make_rng(rng)
    n_full, rem, counts = _split_duration(np.array([float(duration)]), dt)
    z = rng.standard_normal(int(counts[0]))
    h = np.full(int(counts[0]), dt)
    if rem[0] > 0:
        h[-1] = rem[0]
    return PathSegment(dt, float(duration), np.sqrt(h) * z, anchor if start is None else float(start), anchor)


# -- first passage ------------------------------------------------------------------

@numba.njit(cache=True)
def _hit_kernel(starts, a, dt, normals, uniforms, ist, fst, tau, exitv, i_w2, i_off, nsteps, max_steps):
    """Resumable two-sided exit from (-a, a).

    ist = [run index, normal cursor, uniform cursor, run in progress]
    fst = [x, t, integral of (x - start)^2, integral of x^2]
    Returns 1 when a buffer is exhausted (state saved), 0 when all runs are done.
    """
    sq = math.sqrt(dt)
    cut = _BRIDGE_CUT * dt
    n = starts.shape[0]
    k, pn, pu, active = ist[0], ist[1], ist[2], ist[3]
    nn = normals.shape[0]
    nu = uniforms.shape[0]
    x, t, iw, io = fst[0], fst[1], fst[2], fst[3]
    while k < n:
        b = starts[k]
        if active == 0:
            if abs(b) >= a:
                tau[k] = 0.0
                exitv[k] = b
                i_w2[k] = 0.0
                i_off[k] = 0.0
                nsteps[k] = 0
                k += 1
                continue
            x, t, iw, io = b, 0.0, 0.0, 0.0
            nsteps[k] = 0
            active = 1
        while True:
            if pn >= nn or pu >= nu:
                ist[0], ist[1], ist[2], ist[3] = k, pn, pu, active
                fst[0], fst[1], fst[2], fst[3] = x, t, iw, io
                return 1
            if nsteps[k] >= max_steps:
                raise RuntimeError("first-passage step cap exceeded")
            x2 = x + sq * normals[pn]
            pn += 1
            nsteps[k] += 1
            frac = -1.0
            target = 0.0
            if x2 >= a:
                target = a
                frac = (a - x) / (x2 - x)
            elif x2 <= -a:
                target = -a
                frac = (-a - x) / (x2 - x)
            else:
                du = (a - x) * (a - x2)
                dl = (a + x) * (a + x2)
                if du < cut or dl < cut:
                    pu_ = math.exp(-2.0 * du / dt)
                    pl_ = math.exp(-2.0 * dl / dt)
                    u = uniforms[pu]
                    pu += 1
                    if u < pu_:
                        target = a
                        frac = u / pu_
                    elif u < pu_ + pl_:
                        target = -a
                        frac = (u - pu_) / pl_
            if frac >= 0.0:
                h = frac * dt
                io += 0.5 * (x * x + target * target) * h
                iw += 0.5 * ((x - b) ** 2 + (target - b) ** 2) * h
                t += h
                tau[k] = t
                exitv[k] = target
                i_w2[k] = iw
                i_off[k] = io
                break
            io += 0.5 * (x * x + x2 * x2) * dt
            iw += 0.5 * ((x - b) ** 2 + (x2 - b) ** 2) * dt
            t += dt
            x = x2
        active = 0
        k += 1
    ist[0], ist[1], ist[2], ist[3] = k, pn, pu, 0
    return 0


def simulate_hitting_batch(starts, sqrt_beta: float, dt: float, rng, block: int = _BLOCK,
                           max_steps: int = MAX_STEPS) -> HittingBatch:
    """First exit of start + W_t from (-sqrt_beta, sqrt_beta) for each start."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not sqrt_beta >= 0:
        raise ValueError("threshold must be >= 0")
    rng = make_rng(rng)
    starts = np.ascontiguousarray(starts, dtype=float)
    n = starts.shape[0]
    tau, exitv, iw, io = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    nsteps = np.zeros(n, dtype=np.int64)
    ist = np.zeros(4, dtype=np.int64)
    fst = np.zeros(4)
    # first fill is sized to the expected work so short batches stay cheap
    inside = np.abs(starts) < sqrt_beta
    expected = float(np.sum(np.maximum(sqrt_beta**2 - starts[inside] ** 2, 0.0))) / dt
    first = int(min(block, max(1024, 1.25 * expected + 64)))
    normals = rng.standard_normal(first)
    uniforms = rng.random(max(first // 8, 256))
    while _hit_kernel(starts, float(sqrt_beta), float(dt), normals, uniforms, ist, fst,
                      tau, exitv, iw, io, nsteps, max_steps):
        if ist[1] >= normals.shape[0]:
            normals = rng.standard_normal(block)
            ist[1] = 0
        if ist[2] >= uniforms.shape[0]:
            uniforms = rng.random(block // 8)
            ist[2] = 0
    return HittingBatch(starts, tau, exitv, iw, io, nsteps)


def simulate_hitting(start_offset: float, sqrt_beta: float, dt: float, rng) -> HittingResult:
    """First time |start_offset + W_t| >= sqrt_beta; tau = 0 if already outside."""
    return simulate_hitting_batch(np.array([float(start_offset)]), sqrt_beta, dt, rng, block=1 << 16)[0]


# -- coupled coarse/fine passage for discretization checks ------------------------

@numba.njit(cache=True, inline="always")
def _step_exit(x, x2, a, dt, uniforms, pu, cut):
    """Return (frac, target, new uniform cursor); frac < 0 means no exit in the step."""
    if x2 >= a:
        return (a - x) / (x2 - x), a, pu
    if x2 <= -a:
        return (-a - x) / (x2 - x), -a, pu
    du = (a - x) * (a - x2)
    dl = (a + x) * (a + x2)
    if du < cut or dl < cut:
        p_up = math.exp(-2.0 * du / dt)
        p_lo = math.exp(-2.0 * dl / dt)
        u = uniforms[pu]
        pu += 1
        if u < p_up:
            return u / p_up, a, pu
        if u < p_up + p_lo:
            return (u - p_up) / p_lo, -a, pu
    return -1.0, 0.0, pu


@numba.njit(cache=True)
def _pair_kernel(b, a, dt, n_runs, normals, uniforms, ist, out):
    """Exit of b + W from (-a, a) on the dt grid and on the dt/2 grid, same increments.

    out[:, 0..1] = (tau, int (x-b)^2) on the coarse grid, out[:, 2..3] on the fine grid.
    """
    h = 0.5 * dt
    sh = math.sqrt(h)
    cut_c = _BRIDGE_CUT * dt
    cut_f = _BRIDGE_CUT * h
    k, pn, pu = ist[0], ist[1], ist[2]
    nn = normals.shape[0]
    nu = uniforms.shape[0]
    while k < n_runs:
        # a run restarts from its first increment if a buffer runs dry mid-way
        xc = b
        xf = b
        tc = 0.0
        tf = 0.0
        ic = 0.0
        jf = 0.0
        done_c = abs(b) >= a
        done_f = done_c
        q = pn
        r = pu
        ok = True
        while not (done_c and done_f):
            if q + 2 > nn or r + 3 > nu:
                ok = False
                break
            z1 = normals[q]
            z2 = normals[q + 1]
            q += 2
            if not done_f:
                x2 = xf + sh * z1
                frac, tgt, r = _step_exit(xf, x2, a, h, uniforms, r, cut_f)
                if frac >= 0.0:
                    tf += frac * h
                    jf += 0.5 * ((xf - b) ** 2 + (tgt - b) ** 2) * frac * h
                    done_f = True
                else:
                    jf += 0.5 * ((xf - b) ** 2 + (x2 - b) ** 2) * h
                    xf = x2
                    x2 = xf + sh * z2
                    frac, tgt, r = _step_exit(xf, x2, a, h, uniforms, r, cut_f)
                    if frac >= 0.0:
                        tf += h + frac * h
                        jf += 0.5 * ((xf - b) ** 2 + (tgt - b) ** 2) * frac * h
                        done_f = True
                    else:
                        tf += dt
                        jf += 0.5 * ((xf - b) ** 2 + (x2 - b) ** 2) * h
                        xf = x2
            if not done_c:
                x2 = xc + sh * (z1 + z2)
                frac, tgt, r = _step_exit(xc, x2, a, dt, uniforms, r, cut_c)
                if frac >= 0.0:
                    tc += frac * dt
                    ic += 0.5 * ((xc - b) ** 2 + (tgt - b) ** 2) * frac * dt
                    done_c = True
                else:
                    tc += dt
                    ic += 0.5 * ((xc - b) ** 2 + (x2 - b) ** 2) * dt
                    xc = x2
        if not ok:
            ist[0], ist[1], ist[2] = k, pn, pu
            return 1
        out[k, 0] = tc
        out[k, 1] = ic
        out[k, 2] = tf
        out[k, 3] = jf
        pn = q
        pu = r
        k += 1
    ist[0], ist[1], ist[2] = k, pn, pu
    return 0


def coupled_hitting(start: float, sqrt_beta: float, dt: float, n_runs: int, seed,
                    block: int = _BLOCK) -> np.ndarray:
    """Exit time and squared-increment integral at steps dt and dt/2 on shared increments.

    Returns an (n_runs, 4) array: coarse tau, coarse integral, fine tau, fine integral.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = make_rng(seed)
    out = np.zeros((n_runs, 4))
    ist = np.zeros(3, dtype=np.int64)
    normals = rng.standard_normal(block)
    uniforms = rng.random(block // 4)
    while _pair_kernel(float(start), float(sqrt_beta), float(dt), n_runs, normals, uniforms, ist, out):
        if ist[1] == 0 and ist[2] == 0:
            block *= 2  # a single run outgrew the buffer
        # top up only the buffers that are running low, so neither grows without bound
        normals = normals[ist[1]:]
        if normals.shape[0] < block:
            normals = np.concatenate([normals, rng.standard_normal(block)])
        uniforms = uniforms[ist[2]:]
        if uniforms.shape[0] < block // 4:
            uniforms = np.concatenate([uniforms, rng.random(block // 4)])
        ist[1] = ist[2] = 0
    return out


# -- stopping-time oracles ------------------------------------------------------------

@dataclass(frozen=True)
class TwoSidedExit:
    """Exit time of start + W_t from (-threshold, threshold)."""

    start: float = 0.0
    threshold: float = 1.0


@dataclass(frozen=True)
class FixedTime:
    T: float


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float

    def within(self, target: float, k: float = 4.0) -> bool:
        return abs(self.mean - target) <= k * self.se

    def z(self, target: float) -> float:
        return (self.mean - target) / self.se if self.se > 0 else (0.0 if self.mean == target else math.inf)


@dataclass(frozen=True)
class WaldMoments:
    """Moments of a stopping time tau of a standard Wiener process W (W_0 = 0)."""

    n_runs: int
    dt: float
    tau: Estimate
    w2: Estimate
    w4: Estimate
    int_w2: Estimate
    # E[int W^2] - E[W^4]/6, paired per run
    stop_identity: Estimate
    # E[W^2] - E[tau], paired per run
    wald_identity: Estimate


def _est(x: np.ndarray) -> Estimate:
    n = x.shape[0]
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def wald_moment_oracle(tau_spec, n_runs: int, dt: float, seed) -> WaldMoments:
    """Monte Carlo estimates of E[tau], E[W_tau^2], E[W_tau^4], E[int_0^tau W^2 dt]."""
    if n_runs < 10_000:
        raise ValueError("n_runs must be >= 1e4")
    rng = make_rng(seed)
    if isinstance(tau_spec, TwoSidedExit):
        res = simulate_hitting_batch(np.full(n_runs, float(tau_spec.start)), tau_spec.threshold, dt, rng)
        tau = res.tau
        w = res.exit_value - tau_spec.start
        integ = res.integral_w2
    elif isinstance(tau_spec, FixedTime):
        res = advance_fixed_batch(np.full(n_runs, float(tau_spec.T)), dt, rng)
        tau = res.duration
        w = res.end
        integ = res.int_b2
    else:
        raise TypeError(f"unsupported stopping-time spec {tau_spec!r}")
    w2 = w * w
    w4 = w2 * w2
    return WaldMoments(n_runs, dt, _est(tau), _est(w2), _est(w4), _est(integ),
                       _est(integ - w4 / 6.0), _est(w2 - tau))


@dataclass(frozen=True)
class DtHalving:
    """Estimates at dt and dt/2 from coupled paths, with their paired change."""

    n_runs: int
    dt: float
    tau_coarse: Estimate
    tau_fine: Estimate
    tau_change: Estimate
    int_coarse: Estimate
    int_fine: Estimate
    int_change: Estimate

    @staticmethod
    def combined(a: Estimate, b: Estimate) -> float:
        return math.hypot(a.se, b.se)

    @property
    def tau_ok(self) -> bool:
        return abs(self.tau_change.mean) < self.combined(self.tau_coarse, self.tau_fine)

    @property
    def int_ok(self) -> bool:
        return abs(self.int_change.mean) < self.combined(self.int_coarse, self.int_fine)


def dt_halving_check(start: float, sqrt_beta: float, dt: float, n_runs: int, seed) -> DtHalving:
    """Change of E[tau] and E[int W^2] when dt is halved, on coupled paths."""
    out = coupled_hitting(start, sqrt_beta, dt, n_runs, seed)
    return DtHalving(n_runs, dt, _est(out[:, 0]), _est(out[:, 2]), _est(out[:, 0] - out[:, 2]),
                     _est(out[:, 1]), _est(out[:, 3]), _est(out[:, 1] - out[:, 3]))
