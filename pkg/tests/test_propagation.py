import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pendulum_uq.pendulum import PendulumConfig, PendulumSample, generate_dataset
from pendulum_uq.propagation import InsufficientDataError, monte_carlo_propagate, propagate


def make_sample(periods, length=0.5):
    return PendulumSample(1.0, 5.0, length, tuple(periods), 9.8, length, 1.0, 0.0)


def periods_with(mean, sd, n=10, seed=0):
    z = np.random.default_rng(seed).standard_normal(n)
    z = (z - z.mean()) / z.std(ddof=1)
    return mean + sd * z


def test_identical_periods_leave_length_term():
    u = propagate(make_sample([1.3] * 10), 0.02)
    assert u.sigma_rel == 0.02
    assert u.comp_period == 0.0


def test_worked_example_and_mc_cross_check():
    s = make_sample(periods_with(1.0, 0.05))
    u = propagate(s, 0.02)
    expected = math.sqrt(0.02**2 + (2 * 0.05 / math.sqrt(10)) ** 2)
    assert u.sigma_rel == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.037417, abs=1e-6)
    mc = monte_carlo_propagate(s, 0.02, 400_000, np.random.default_rng(1))
    assert mc == pytest.approx(u.sigma_rel, rel=0.05)


def test_zero_case():
    s = make_sample([0.9] * 10)
    assert propagate(s, 0.0).sigma_rel == 0.0
    assert monte_carlo_propagate(s, 0.0, 10_000, np.random.default_rng(0)) == 0.0


def test_quadrature_identity_and_g_estimate():
    s = make_sample(periods_with(1.2, 0.07, seed=3), length=0.6)
    u = propagate(s, 0.02)
    assert u.sigma_rel**2 == pytest.approx(u.comp_length**2 + u.comp_period**2, rel=1e-14)
    assert u.sigma_abs == pytest.approx(u.sigma_rel * u.g_estimate, rel=1e-15)
    assert u.g_estimate == pytest.approx(4 * math.pi**2 * 0.6 / np.mean(s.period_measurements) ** 2)


def test_mc_agrees_on_random_samples():
    d = generate_dataset(PendulumConfig(period_noise_range=(0.01, 0.2), seed=21), 400)
    rng = np.random.default_rng(2)
    checked = 0
    for sample in d:
        u = propagate(sample, 0.02)
        if u.sigma_rel > 0.1:
            continue
        mc = monte_carlo_propagate(sample, 0.02, 200_000, rng)
        assert abs(mc / u.sigma_rel - 1) < 0.05
        checked += 1
        if checked == 100:
            break
    assert checked == 100


def test_mc_standard_error_scaling():
    s = make_sample(periods_with(1.0, 0.05))
    rng = np.random.default_rng(5)
    small = [monte_carlo_propagate(s, 0.02, 250_000, rng) for _ in range(30)]
    large = [monte_carlo_propagate(s, 0.02, 1_000_000, rng) for _ in range(30)]
    ratio = np.std(small, ddof=1) / np.std(large, ddof=1)
    # F-distribution spread for 29/29 dof keeps this well inside [1.3, 3]
    assert 1.3 < ratio < 3.0


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        propagate(make_sample([1.0]), 0.02)
    with pytest.raises(ValueError):
        monte_carlo_propagate(make_sample([1.0, 1.1]), 0.02, 100, np.random.default_rng(0))


@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_period_term_scale_invariant(c, seed):
    p = periods_with(1.0, 0.05, seed=seed)
    a = propagate(make_sample(p), 0.02)
    b = propagate(make_sample(c * p), 0.02)
    assert b.comp_period == pytest.approx(a.comp_period, rel=1e-9)


@settings(max_examples=50)
@given(st.floats(0.001, 0.2), st.floats(1.01, 5.0), st.integers(0, 1000))
def test_monotone_in_spread(sd, factor, seed):
    a = propagate(make_sample(periods_with(1.0, sd, seed=seed)), 0.02)
    b = propagate(make_sample(periods_with(1.0, min(sd * factor, 0.25), seed=seed)), 0.02)
    if min(sd * factor, 0.25) > sd:
        assert b.sigma_rel > a.sigma_rel
