from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from pendulum_uq.metrics import (DEFAULT_GRID, UncertaintyComparison, UndefinedCorrelationError,
                                 accuracy_metrics, central_z, compare_uncertainty,
                                 detect_constant_relative_uncertainty, epistemic_vs_distance,
                                 pearson_correlation, reliability_curve)
from pendulum_uq.pendulum import OodSpec, PendulumConfig, generate_dataset, generate_ood_dataset
from pendulum_uq.propagation import propagate_dataset
from pendulum_uq.uq import MethodConfig, PredictiveSummary, predict, train_model


def summary(g_hat, sigma):
    g_hat = np.asarray(g_hat, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), g_hat.shape)
    return PredictiveSummary(g_hat, sigma, np.zeros_like(g_hat), sigma, 10)


def test_grid_and_z():
    assert len(DEFAULT_GRID) == 19
    assert DEFAULT_GRID[0] == 0.05 and DEFAULT_GRID[-1] == 0.95
    np.testing.assert_allclose(central_z(DEFAULT_GRID), stats.norm.ppf(0.5 + DEFAULT_GRID / 2), rtol=1e-12)
    assert central_z([0.682689492137086])[0] == pytest.approx(1.0, abs=1e-12)


def test_calibrated_sample_coverage():
    rng = np.random.default_rng(0)
    g_hat = rng.uniform(5, 15, 10_000)
    sigma = rng.uniform(0.1, 1.0, 10_000)
    truth = rng.normal(g_hat, sigma)
    curve = reliability_curve(summary(g_hat, sigma), truth, grid=[0.3, 0.6827, 0.9])
    assert abs(curve.empirical[1] - 0.6827) < 0.02
    assert curve.n_samples == 10_000


def test_coverage_extremes():
    rng = np.random.default_rng(1)
    g_hat = rng.uniform(5, 15, 200)
    truth = g_hat + rng.normal(0, 1, 200)
    wide = reliability_curve(summary(g_hat, 1e300), truth)
    assert np.all(wide.empirical == 1.0)
    narrow = reliability_curve(summary(g_hat, 1e-300), truth)
    assert np.all(narrow.empirical == 0.0)
    assert narrow.max_deficit == pytest.approx(0.95)
    assert wide.max_abs_error == pytest.approx(0.95)


def test_reliability_errors():
    with pytest.raises(ValueError):
        reliability_curve(summary([], 1.0), [])
    with pytest.raises(ValueError):
        reliability_curve(summary([1.0, 2.0], 1.0), [1.0])
    with pytest.raises(ValueError):
        reliability_curve(summary([1.0], 1.0), [1.0], grid=[0.5, 0.4])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 5.0))
def test_reliability_monotone(seed, scale):
    rng = np.random.default_rng(seed)
    g_hat = rng.uniform(5, 15, 150)
    truth = g_hat + rng.standard_t(3, 150)
    curve = reliability_curve(summary(g_hat, scale * rng.uniform(0.5, 2, 150)), truth)
    assert np.all(np.diff(curve.empirical) >= 0)
    assert np.all((curve.empirical >= 0) & (curve.empirical <= 1))


def test_pearson_examples():
    x = np.linspace(0, 1, 50)
    assert pearson_correlation(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-15)
    assert pearson_correlation(x, -x) == pytest.approx(-1.0, abs=1e-15)
    rng = np.random.default_rng(2)
    assert abs(pearson_correlation(rng.normal(size=10_000), rng.normal(size=10_000))) < 0.05
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation(x, np.ones(50))
    with pytest.raises(ValueError):
        pearson_correlation([1.0], [2.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_pearson_affine_invariance(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=40)
    y = x + rng.normal(size=40)
    r = pearson_correlation(x, y)
    assert pearson_correlation(a * x + b, c * y - b) == pytest.approx(r, abs=1e-9)
    assert r == pytest.approx(stats.pearsonr(x, y)[0], abs=1e-12)


def _comparison(pred_rel, analytic_rel, g=10.0):
    n = len(pred_rel)
    g = np.full(n, g)
    return UncertaintyComparison(np.asarray(analytic_rel), np.asarray(pred_rel), np.zeros(n), g, g)


def test_constant_detector_examples():
    analytic = np.random.default_rng(3).uniform(0.02, 0.1, 500)
    flag, stat = detect_constant_relative_uncertainty(_comparison(np.full(500, 0.05), analytic))
    assert flag and stat == 0.0
    flag, stat = detect_constant_relative_uncertainty(_comparison(analytic.copy(), analytic))
    assert not flag and stat == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_constant_detector_unit_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    data = generate_dataset(PendulumConfig(seed=seed % 50), 200)
    g_hat = data.g_true * (1 + rng.normal(0, 0.02, 200))
    sigma = g_hat * rng.uniform(0.02, 0.08, 200)
    pred = PredictiveSummary(g_hat, sigma, np.zeros(200), sigma, 10)
    base = detect_constant_relative_uncertainty(compare_uncertainty(pred, data))[1]
    pred2 = PredictiveSummary(g_hat * scale, sigma * scale, np.zeros(200), sigma * scale, 10)
    assert detect_constant_relative_uncertainty(compare_uncertainty(pred2, data))[1] == pytest.approx(base, rel=1e-12)


def test_compare_uncertainty_joins_analytic():
    data = generate_dataset(PendulumConfig(seed=4), 300)
    _, analytic = propagate_dataset(data)
    g = data.g_true
    pred = PredictiveSummary(g, g * analytic, g * 0.001, g * analytic, 10)
    comp = compare_uncertainty(pred, data)
    assert len(comp) == 300
    assert comp.pearson_r == pytest.approx(1.0, abs=1e-12)
    assert comp.rmse_g == 0.0
    np.testing.assert_allclose(comp.predicted_ep_rel, 0.001)


def test_accuracy_examples():
    t = np.linspace(5, 15, 100)
    assert accuracy_metrics(t, t) == (0.0, 0.0, 0.0)
    rmse, mae, mse = accuracy_metrics(t + 1, t)
    assert rmse == pytest.approx(1.0, rel=1e-14) and mse == pytest.approx(1.0, rel=1e-14)
    assert mae == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        accuracy_metrics([], [])


@given(arrays(float, st.integers(1, 50), elements=st.floats(-1e3, 1e3)),
       arrays(float, 1, elements=st.floats(-1e3, 1e3)))
def test_accuracy_inequalities(pred, offset):
    truth = np.zeros_like(pred) + offset
    rmse, mae, mse = accuracy_metrics(pred, truth)
    assert rmse >= mae * (1 - 1e-12) - 1e-12
    assert mae >= abs(mse) * (1 - 1e-12) - 1e-12


def test_epistemic_sweep_zero_shift_level():
    cfg = PendulumConfig(seed=6)
    tr = generate_dataset(cfg, 512, "train")
    te = generate_dataset(cfg, 200, "test")
    mc = MethodConfig.default("de", seed=1, hidden=(8,), n_members=3)
    model = train_model(tr.inputs(), tr.g_true, replace(mc, train=replace(mc.train, epochs=2)))
    far = generate_ood_dataset(cfg, OodSpec("shift_l_keep_g", (1.6, 2.4)), 200)
    table = epistemic_vs_distance(model, [("none", te), ("L_1.6-2.4", far)])
    assert [t[0] for t in table] == ["none", "L_1.6-2.4"]
    assert table[0][1] == float(np.median(predict(model, te.inputs()).sigma_ep))
    with pytest.raises(ValueError):
        epistemic_vs_distance(model, [("none", te)])
