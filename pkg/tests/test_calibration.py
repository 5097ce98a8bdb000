import numpy as np
import pytest

import oracles
from conftest import pred_set, t_fixture
from novelconf import calibration as cal
from novelconf.predictions import to_probabilities


def test_apply_identity_at_t1():
    p = pred_set(np.random.default_rng(0).normal(size=(6, 3)), [0, 1, 2, 0, 1, 2])
    np.testing.assert_array_equal(cal.apply(cal.FixedTemperature(1.0), p).probs, to_probabilities(p).probs)


def test_apply_t2():
    p = pred_set([[2.0, 0.0]], [0])
    np.testing.assert_allclose(cal.apply(cal.FixedTemperature(2.0), p).probs, [[0.731059, 0.268941]], atol=1e-6)


def test_novelty_linear_with_zero_slope_equals_fixed():
    rng = np.random.default_rng(1)
    p = pred_set(rng.normal(size=(8, 2)), rng.integers(0, 2, 8), novelty=rng.uniform(size=8))
    a = cal.apply(cal.NoveltyLinearTemperature(1.0, 0.0, 0.1, 0.9), p).probs
    np.testing.assert_array_equal(a, cal.apply(cal.FixedTemperature(1.0), p).probs)


@pytest.mark.parametrize("scale", [1.0, 3.0])
def test_fit_recovers_constructed_temperature(scale):
    val = t_fixture(scale)
    t_fit = cal.fit_temperature(val).t
    logits = val.logits.tolist()
    labels = val.labels.tolist()
    t_grid, _ = oracles.dense_grid_argmin(lambda t: oracles.scaled_nll(logits, labels, t))
    assert abs(t_fit - scale) < 1e-3
    assert abs(t_fit - t_grid) < 1e-3


def test_flat_objective_returns_grid_minimum_value():
    val = pred_set([[50.0, 0.0]] * 5, [0] * 5)
    t = cal.fit_temperature(val).t
    grid = np.geomspace(cal.T_MIN, cal.T_MAX, cal.COARSE_POINTS)
    best = min(cal.scaled_nll(val, g) for g in grid)
    assert cal.scaled_nll(val, t) <= best + 1e-15


def test_fit_never_worse_than_t1_on_random_sets():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n, c = int(rng.integers(2, 40)), int(rng.integers(2, 5))
        val = pred_set(rng.normal(size=(n, c)) * rng.uniform(0.1, 8), rng.integers(0, c, n))
        assert cal.scaled_nll(val, cal.fit_temperature(val).t) <= cal.scaled_nll(val, 1.0) + 1e-12


def test_fit_rejects_empty_or_unlabeled():
    with pytest.raises(ValueError):
        cal.fit_temperature(pred_set(np.zeros((0, 2)), []))


@pytest.mark.parametrize("raw, expected", [(50, 0.5), (5, 0.0), (100, 1.0), (10, 0.0), (90, 1.0)])
def test_normalize_novelty(raw, expected):
    assert cal.normalize_novelty(raw, 10, 90) == pytest.approx(expected)


def test_normalize_degenerate_percentiles():
    assert cal.normalize_novelty(3.0, 2.0, 2.0) == 0.5


def test_percentiles_oracles():
    p5, p95 = cal.fit_novelty_percentiles(np.arange(1, 101))
    assert p5 == pytest.approx(5.95, abs=1e-12) and p95 == pytest.approx(95.05, abs=1e-12)
    assert cal.fit_novelty_percentiles([0.0, 1.0]) == pytest.approx((0.05, 0.95), abs=1e-12)
    assert cal.fit_novelty_percentiles([4.2] * 7) == (4.2, 4.2)
    with pytest.raises(ValueError):
        cal.fit_novelty_percentiles([1.0])


def test_novelty_fit_with_constant_novelty_prefers_zero_slope():
    base = t_fixture(3.0)
    val = base.with_novelty(np.zeros(len(base)))
    c = cal.fit_novelty_scaling(val, (0.0, 1.0))
    assert c.t1 == 0.0 and c.t0 == 3.0


def test_novelty_fit_all_mapped_to_zero_uses_best_grid_t():
    rng = np.random.default_rng(4)
    base = pred_set(rng.normal(size=(30, 3)) * 4, rng.integers(0, 3, 30))
    val = base.with_novelty(np.full(30, -5.0))
    c = cal.fit_novelty_scaling(val, (0.0, 1.0))
    grid_best = min(cal.NOVELTY_T0_GRID, key=lambda t: cal.scaled_nll(base, t))
    assert c.t1 == 0.0 and c.t0 == grid_best


def test_novelty_fit_requires_scores():
    with pytest.raises(ValueError):
        cal.fit_novelty_scaling(pred_set([[1.0, 0.0]], [0]), (0.0, 1.0))


def test_novelty_fit_uses_slope_when_novelty_predicts_errors():
    # confident rows with low novelty are right; confident rows with high novelty are a coin flip
    z = [[4.0, 0.0]] * 40
    labels = [0] * 20 + [0, 1] * 10
    nov = [0.0] * 20 + [1.0] * 20
    c = cal.fit_novelty_scaling(pred_set(z, labels, novelty=nov), (0.0, 1.0))
    assert c.t1 > 0


def test_calibrator_json_round_trip(tmp_path):
    for c in (cal.FixedTemperature(2.5), cal.NoveltyLinearTemperature(1.25, 0.5, 0.1, 0.7)):
        cal.save_calibrator(c, tmp_path / "c.json")
        assert cal.load_calibrator(tmp_path / "c.json") == c
    with pytest.raises(ValueError):
        cal.calibrator_from_dict({"kind": "other"})


def test_invalid_temperatures_rejected():
    with pytest.raises(ValueError):
        cal.FixedTemperature(0.0)
    with pytest.raises(ValueError):
        cal.NoveltyLinearTemperature(1.0, -2.0, 0.0, 1.0)


def test_sweep_minimum_sits_next_to_fitted_t():
    val = t_fixture(3.0)
    temps = np.arange(2.0, 4.01, 0.25)
    rows = cal.sweep(val, temps)
    t_best = min(rows, key=lambda r: r[1])[0]
    assert t_best == temps[np.argmin(np.abs(temps - cal.fit_temperature(val).t))]
