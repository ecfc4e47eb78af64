import math

import numpy as np
import pytest

from wiener_sampling.kernels import (
    FixedTime,
    TwoSidedExit,
    advance_fixed,
    advance_fixed_batch,
    coupled_hitting,
    default_dt,
    dt_halving_check,
    simulate_hitting,
    simulate_hitting_batch,
    wald_moment_oracle,
)
from wiener_sampling.rng import make_rng


def test_default_dt():
    assert default_dt(2.0, 1.0) == 1e-3
    assert default_dt(0.5, 3.0) == 5e-4
    assert default_dt(1e-9) == 1e-6
    assert default_dt(0.0, 0.2) == pytest.approx(2e-4)  # zero scales are skipped


def test_hitting_boundary_cases():
    r = simulate_hitting(1.0, 1.0, 1e-3, make_rng(1))
    assert r.tau == 0.0 and r.exit_value == 1.0
    r = simulate_hitting(-1.5, 1.0, 1e-3, make_rng(1))
    assert r.tau == 0.0 and r.exit_value == -1.5
    r = simulate_hitting(0.0, 0.0, 1e-3, make_rng(1))
    assert r.tau == 0.0 and r.integral_w2 == 0.0


def test_hitting_exits_at_barrier():
    b = simulate_hitting_batch(np.zeros(20_000), 0.8, 1e-3, make_rng(2))
    assert np.all(np.abs(b.exit_value) == 0.8)  # overshoot is zero by construction
    assert np.all(b.tau > 0)
    assert np.all(b.integral_w2 >= 0)


def test_hitting_deterministic():
    a = simulate_hitting_batch(np.linspace(-0.5, 0.5, 500), 1.0, 1e-3, make_rng(9))
    b = simulate_hitting_batch(np.linspace(-0.5, 0.5, 500), 1.0, 1e-3, make_rng(9))
    np.testing.assert_array_equal(a.tau, b.tau)
    np.testing.assert_array_equal(a.exit_value, b.exit_value)
    np.testing.assert_array_equal(a.integral_w2_from_offset, b.integral_w2_from_offset)
    assert simulate_hitting(0.2, 1.0, 1e-3, 5) == simulate_hitting(0.2, 1.0, 1e-3, 5)


def test_hitting_resumes_across_blocks():
    # tiny blocks force many refills; the law must not change
    res = simulate_hitting_batch(np.zeros(20_000), 1.0, 1e-2, make_rng(3), block=4096)
    se = res.tau.std() / math.sqrt(len(res))
    assert abs(res.tau.mean() - 1.0) <= 4 * se + 0.01


def test_mean_hitting_time_million_runs():
    res = simulate_hitting_batch(np.zeros(1_000_000), 1.0, 1e-3, make_rng(17))
    se = res.tau.std(ddof=1) / 1000
    assert abs(res.tau.mean() - 1.0) <= 4 * se


def test_advance_fixed_zero_duration():
    seg = advance_fixed(0.0, 1e-3, make_rng(0), anchor=0.7)
    assert seg.end_offset == 0.0 and seg.integral_sq == 0.0


def test_advance_fixed_segment():
    seg = advance_fixed(0.0105, 1e-3, make_rng(0), anchor=0.0, start=0.25)
    assert len(seg.increments) == 11
    assert seg.steps[-1] == pytest.approx(0.0005)
    assert seg.running_value == pytest.approx(0.25 + seg.increments.sum(), abs=0)
    assert seg.end_offset == seg.running_value
    with pytest.raises(ValueError):
        advance_fixed(-1.0, 1e-3, make_rng(0))


def test_fixed_batch_moments():
    T = 0.1
    b = advance_fixed_batch(np.full(1_000_000, T), 1e-3, make_rng(6))
    se = b.int_b2.std(ddof=1) / 1000
    assert abs(b.int_b2.mean() - T * T / 2) <= 4 * se
    e2 = b.end**2
    assert abs(e2.mean() - T) <= 4 * e2.std(ddof=1) / 1000


def test_fixed_batch_matches_single_segment_law():
    b = advance_fixed_batch(np.array([0.0, 0.5, 0.0012]), 1e-3, make_rng(1))
    assert b.end[0] == 0.0 and b.int_b2[0] == 0.0
    np.testing.assert_allclose(b.integral_sq(np.zeros(3)), b.int_b2)


def test_wald_oracle_two_sided():
    w = wald_moment_oracle(TwoSidedExit(0.0, 1.0), 100_000, 1e-3, 21)
    assert w.tau.within(1.0)
    assert w.w4.mean == 1.0  # exits land on +-1
    assert w.int_w2.within(1 / 6)
    assert w.stop_identity.within(0.0)
    assert w.wald_identity.within(0.0)


def test_wald_oracle_fixed_time():
    w = wald_moment_oracle(FixedTime(0.5), 100_000, 1e-3, 22)
    assert w.w4.within(3 * 0.25)
    assert w.int_w2.within(0.25 / 2)
    assert w.stop_identity.within(0.0)


def test_wald_oracle_zero_time():
    for spec in (FixedTime(0.0), TwoSidedExit(0.0, 0.0)):
        w = wald_moment_oracle(spec, 10_000, 1e-3, 0)
        for est in (w.tau, w.w2, w.w4, w.int_w2):
            assert est.mean == 0.0


def test_wald_oracle_preconditions():
    with pytest.raises(ValueError):
        wald_moment_oracle(FixedTime(1.0), 100, 1e-3, 0)
    with pytest.raises(TypeError):
        wald_moment_oracle("tau", 10_000, 1e-3, 0)


def test_coupled_paths_agree_in_law():
    out = coupled_hitting(0.0, 1.0, 1e-2, 20_000, 5)
    assert out.shape == (20_000, 4)
    assert np.all(out >= 0)
    assert abs(out[:, 0].mean() - out[:, 2].mean()) < 0.02


def test_dt_halving_detects_coarse_bias():
    coarse = dt_halving_check(0.0, 1.0, 0.1, 100_000, 3)
    assert not coarse.int_ok  # first-order bias is visible at dt = 0.1
    fine = dt_halving_check(0.0, 1.0, 1e-3, 20_000, 3)
    assert fine.tau_ok and fine.int_ok
