import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from pendulum_uq.pendulum import (CHUNK_SIZE, Dataset, DomainError, OodSpec, PendulumConfig,
                                  generate_dataset, generate_ood_dataset, gravitational_accel,
                                  sample_pendulum, true_period)
from pendulum_uq.propagation import propagate_dataset


def test_true_period_examples():
    assert true_period(0.4, 10.0) == pytest.approx(2 * math.pi * 0.2, rel=1e-15)
    assert true_period(1.0, 4 * math.pi**2) == pytest.approx(1.0, rel=1e-15)


def test_gravitational_accel_examples():
    assert gravitational_accel(1.0, 2 * math.pi) == pytest.approx(1.0, rel=1e-15)
    assert gravitational_accel(0.5, 2 * math.pi * math.sqrt(0.05)) == pytest.approx(10.0, rel=1e-14)


def test_gravitational_accel_against_root_solve():
    # solve 4 pi^2 L / T^2 = 9.81 for T by bracketing, independent of true_period
    T = optimize.brentq(lambda t: 4 * math.pi**2 * 0.2 / t**2 - 9.81, 0.1, 5.0, xtol=1e-15)
    assert T == pytest.approx(0.8971, abs=1e-4)
    assert gravitational_accel(0.2, T) == pytest.approx(9.81, rel=1e-12)


@pytest.mark.parametrize("fn", [true_period, gravitational_accel])
@pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
def test_domain_errors(fn, args):
    with pytest.raises(DomainError):
        fn(*args)


def test_round_trip_random():
    rng = np.random.default_rng(7)
    L = rng.uniform(0.01, 10.0, 1000)
    g = rng.uniform(0.1, 100.0, 1000)
    back = gravitational_accel(L, true_period(L, g))
    assert np.max(np.abs(back / g - 1)) < 1e-12


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_round_trip_property(L, g):
    assert gravitational_accel(L, true_period(L, g)) == pytest.approx(g, rel=1e-12)


def test_zero_noise_sample_is_exact():
    cfg = PendulumConfig(period_noise_range=(0.0, 0.0), length_noise=0.0)
    s = sample_pendulum(cfg, np.random.default_rng(3))
    assert all(t == s.period_true for t in s.period_measurements)
    assert s.length_measured == s.length_true
    assert s.period_true == pytest.approx(true_period(s.length_true, s.g_true), rel=1e-15)


def test_sample_determinism():
    cfg = PendulumConfig(seed=11)
    a = sample_pendulum(cfg, np.random.default_rng(99))
    b = sample_pendulum(cfg, np.random.default_rng(99))
    assert a == b


def test_period_noise_matches_drawn_level():
    cfg = PendulumConfig(period_noise_range=(0.01, 0.20), seed=5)
    d = generate_dataset(cfg, 100_000)
    rel = d.periods / d.period_true[:, None] - 1
    s = rel.std(axis=1, ddof=1)
    n = cfg.n_period_measurements
    se = d.nu / math.sqrt(2 * (n - 1))
    assert np.mean(np.abs(s - d.nu) <= 3 * se) >= 0.99


def test_full_size_dataset_ranges():
    d = generate_dataset(PendulumConfig(), 90_000)
    assert len(d) == 90_000
    assert d.g_true.min() >= 5 and d.g_true.max() < 15
    assert d.length_true.min() >= 0.2 and d.length_true.max() < 0.8
    assert np.all(d.periods > 0) and np.all(d.length_measured > 0)
    np.testing.assert_allclose(d.period_true, 2 * np.pi * np.sqrt(d.length_true / d.g_true), rtol=1e-15)


def test_singleton_and_determinism():
    cfg = PendulumConfig(seed=1)
    assert len(generate_dataset(cfg, 1)) == 1
    a = generate_dataset(cfg, 3000)
    b = generate_dataset(cfg, 3000)
    assert np.array_equal(a.table(), b.table())
    c = generate_dataset(PendulumConfig(seed=2), 3000)
    assert not np.array_equal(a.table(), c.table())
    with pytest.raises(ValueError):
        generate_dataset(cfg, 0)


def test_splits_are_distinct_streams():
    cfg = PendulumConfig(seed=1)
    assert not np.array_equal(generate_dataset(cfg, 100, "train").g_true,
                              generate_dataset(cfg, 100, "test").g_true)


def test_parallel_generation_matches_serial():
    cfg = PendulumConfig(seed=4)
    n = 3 * CHUNK_SIZE + 17
    assert np.array_equal(generate_dataset(cfg, n, workers=2).table(), generate_dataset(cfg, n).table())


def test_inputs_exclude_hidden_fields():
    d = generate_dataset(PendulumConfig(), 500)
    x = d.inputs()
    assert x.shape == (500, 13)
    np.testing.assert_array_equal(x[:, 0], d.mass)
    np.testing.assert_array_equal(x[:, 1], d.angle)
    np.testing.assert_array_equal(x[:, 2], d.length_measured)
    np.testing.assert_array_equal(x[:, 3:], d.periods)
    for hidden in (d.g_true, d.nu, d.length_true, d.period_true):
        assert not any(np.array_equal(x[:, j], hidden) for j in range(13))
    assert d[0].inputs().shape == (13,)


def test_ood_shift_g():
    d = generate_ood_dataset(PendulumConfig(), OodSpec("shift_g", (15, 25)), 2000)
    assert np.all(d.g_true >= 15) and np.all(d.g_true < 25)
    assert np.all((d.length_true >= 0.2) & (d.length_true < 0.8))


def test_ood_shift_l_keep_g():
    d = generate_ood_dataset(PendulumConfig(), OodSpec("shift_l_keep_g", (1.6, 2.4)), 2000)
    assert np.all((d.g_true >= 5) & (d.g_true < 15))
    assert np.all((d.length_true >= 1.6) & (d.length_true < 2.4))
    np.testing.assert_allclose(d.period_true, true_period(d.length_true, d.g_true), rtol=1e-15)


def test_degenerate_ood_is_in_distribution():
    cfg = PendulumConfig(seed=8)
    ood = generate_ood_dataset(cfg, OodSpec("shift_l_keep_g", cfg.l_range), 5000)
    ref = generate_dataset(cfg, 5000, "test")
    assert stats.ks_2samp(ood.g_true, ref.g_true).pvalue > 0.01
    assert stats.ks_2samp(ood.length_true, ref.length_true).pvalue > 0.01


def test_zero_noise_analytic_floor():
    d = generate_dataset(PendulumConfig(period_noise_range=(0, 0), length_noise=0.02), 200)
    _, rel = propagate_dataset(d)
    assert np.all(rel == 0.02)
    d = generate_dataset(PendulumConfig(period_noise_range=(0, 0), length_noise=0.0), 200)
    _, rel = propagate_dataset(d)
    assert np.all(rel == 0.0)


def test_csv_round_trip_exact(tmp_path):
    cfg = PendulumConfig(seed=3)
    d = generate_dataset(cfg, 50)
    d.to_csv(tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["mass", "angle", "length_measured", "period_1"]
    assert header[-4:] == ["g_true", "nu", "length_true", "period_true"]
    back = Dataset.from_csv(tmp_path / "d.csv", cfg)
    assert np.array_equal(back.table(), d.table())


def test_config_round_trip_and_validation(tmp_path):
    cfg = PendulumConfig(period_noise_range=(0.01, 0.05), seed=2**63)
    cfg.save(tmp_path / "c.json")
    assert PendulumConfig.load(tmp_path / "c.json") == cfg
    assert cfg.config_hash() != PendulumConfig().config_hash()
    for bad in (dict(g_range=(15, 5)), dict(l_range=(0, 1)), dict(period_noise_range=(0.1, 1.0)),
                dict(length_noise=1.0), dict(n_period_measurements=1), dict(seed=-1)):
        with pytest.raises(ValueError):
            PendulumConfig(**bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.5))
def test_generated_samples_physical(seed, nu_hi):
    d = generate_dataset(PendulumConfig(period_noise_range=(0.0, nu_hi), length_noise=0.3, seed=seed), 64)
    assert np.all(d.periods > 0) and np.all(d.length_measured > 0)
