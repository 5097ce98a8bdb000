"""Acceptance gate: one marked group per criterion, each with its runtime budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""
import json
import math
import time

import numpy as np
import pytest

import oracles
import test_properties
from conftest import ACCEPTANCE_SEEDS, probs_set, t_fixture
from gradcheck import worst_relative_error
from novelconf import calibration, cli, metrics
from novelconf.predictions import PredictionSet, ProbabilitySet, softmax
from novelconf.report import round_half_away
from novelconf.toybench import sweep_argmin


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f} s, budget {self.seconds} s"


# -- 1 -----------------------------------------------------------------------

@pytest.mark.criterion(1, "metric oracle suite")
def test_metric_fixtures():
    with Budget(5):
        assert metrics.nll(probs_set([[1.0, 0.0]], [0])) == pytest.approx(-math.log(0.999), abs=1e-6)
        assert metrics.nll(probs_set([[0.5, 0.5]], [0])) == pytest.approx(0.693147, abs=1e-6)
        three = probs_set([[0.9, 0.1], [0.6, 0.4], [0.0005, 0.9995]], [0, 0, 0])
        assert metrics.nll(three) == pytest.approx(2.507981, abs=1e-6)
        assert metrics.brier(probs_set([[0.7, 0.3], [0.1, 0.9]], [0, 1])) == pytest.approx(0.223607, abs=1e-6)
        assert metrics.brier(probs_set([[0.0, 1.0]], [0])) == pytest.approx(1.0, abs=1e-6)
        four = probs_set([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]], [0, 1, 0, 0])
        assert metrics.label_error(four) == pytest.approx(0.25, abs=1e-6)
        assert metrics.label_error(probs_set([[0.5, 0.5]], [1])) == 1.0
        ladder = [0.55 + 0.05 * k for k in range(10)]
        assert metrics.ece(probs_set([[c, 1 - c] for c in ladder], [0] * 10))[0] == pytest.approx(0.225, abs=1e-6)
        assert metrics.ece(probs_set([[1.0, 0.0]] * 5, [0] * 5))[0] == pytest.approx(0.0, abs=1e-6)
        rate, count = metrics.e99(probs_set([[0.995, 0.005], [0.999, 0.001], [0.5, 0.5]], [1, 0, 0]))
        assert (rate, count) == (pytest.approx(0.5, abs=1e-6), 2)
        assert metrics.e99(probs_set([[0.6, 0.4]], [0])) == (None, 0)
        assert metrics.percent_reduction(0.10, 0.09) == pytest.approx(10.0, abs=1e-6)


@pytest.mark.criterion(1, "metric oracle suite")
def test_metric_random_trials_match_oracles():
    rng = np.random.default_rng(20240601)
    with Budget(5):
        for _ in range(200):
            n, c = int(rng.integers(1, 51)), int(rng.integers(2, 6))
            z = rng.normal(size=(n, c)) * rng.uniform(0.1, 8)
            # a few saturated rows so the clip and E99 branches are exercised
            z[rng.random(n) < 0.2, 0] += 15
            labels = rng.integers(0, c, n)
            probs = ProbabilitySet(softmax(z), labels, ["familiar_test"] * n, [f"r{i}" for i in range(n)])
            rows, ys = probs.probs.tolist(), labels.tolist()
            assert metrics.nll(probs) == pytest.approx(oracles.nll(rows, ys), abs=1e-12)
            assert metrics.brier(probs) == pytest.approx(oracles.brier(rows, ys), abs=1e-12)
            assert metrics.label_error(probs) == pytest.approx(oracles.label_error(rows, ys), abs=1e-12)
            assert metrics.ece(probs)[0] == pytest.approx(oracles.ece(rows, ys), abs=1e-12)
            got, want = metrics.e99(probs), oracles.e99(rows, ys)
            assert got[1] == want[1]
            assert (got[0] is None) == (want[0] is None)
            if got[0] is not None:
                assert got[0] == pytest.approx(want[0], abs=1e-12)


# -- 2 -----------------------------------------------------------------------

@pytest.mark.criterion(2, "temperature fit")
@pytest.mark.parametrize("scale", [1.0, 3.0])
def test_temperature_fixture_matches_dense_grid(scale):
    with Budget(10):
        pset = t_fixture(scale)
        fitted = calibration.fit_temperature(pset).t
        z, y = pset.logits.tolist(), pset.labels.tolist()
        grid_t, _ = oracles.dense_grid_argmin(lambda t: oracles.scaled_nll(z, y, t))
        assert abs(fitted - grid_t) < 1e-3
        assert abs(fitted - scale) < 1e-3


@pytest.mark.criterion(2, "temperature fit")
def test_fitted_temperature_never_worse_than_unit():
    rng = np.random.default_rng(7)
    with Budget(10):
        for _ in range(50):
            n, c = int(rng.integers(2, 60)), int(rng.integers(2, 6))
            z = rng.normal(size=(n, c)) * rng.uniform(0.1, 10)
            pset = PredictionSet([f"v{i}" for i in range(n)], z, rng.integers(0, c, n), ["val"] * n)
            t = calibration.fit_temperature(pset).t
            assert 0.05 <= t <= 10
            assert calibration.scaled_nll(pset, t) <= calibration.scaled_nll(pset, 1.0) + 1e-12
        # flat objective: every row pinned at the clip bound for most temperatures
        flat = PredictionSet(["a", "b"], [[40.0, 0.0]] * 2, [0, 0], ["val"] * 2)
        t = calibration.fit_temperature(flat).t
        grid_min = min(oracles.scaled_nll([[40.0, 0.0]] * 2, [0, 0], 0.05 + k * 9.95 / 999) for k in range(1000))
        assert calibration.scaled_nll(flat, t) == pytest.approx(grid_min, abs=1e-12)


# -- 3 -----------------------------------------------------------------------

# Absolute errors (familiar, novel) of three methods on one reference task,
# and the rounded percent reductions they are expected to regenerate.
REFERENCE_ERRORS = {
    "single": {"nll": (0.08324, 0.54208), "brier": (0.14663, 0.35199), "ece": (0.01348, 0.10902)},
    "tscaled": {"nll": (0.07348, 0.39971), "brier": (0.14332, 0.33715), "ece": (0.00361, 0.08737)},
    "ens_tscaled": {"nll": (0.06312, 0.36266), "brier": (0.13153, 0.33246), "ece": (0.00856, 0.07723)},
}
REFERENCE_PERCENT = {
    "tscaled": {"nll": (12, 26), "brier": (2, 4), "ece": (73, 20)},
    "ens_tscaled": {"nll": (24, 33), "brier": (10, 6), "ece": (36, 29)},
}


def _groups(method):
    vals = REFERENCE_ERRORS[method]
    return {"groups": {g: {m: vals[m][k] for m in vals} for k, g in enumerate(("familiar_test", "novel_test"))}}


@pytest.mark.criterion(3, "table regeneration")
def test_reference_table_percentages_regenerate(tmp_path, capsys):
    paths = {}
    for m in REFERENCE_ERRORS:
        paths[m] = tmp_path / f"{m}.json"
        paths[m].write_text(json.dumps(_groups(m)))
    with Budget(1):
        code = cli.main(["report", "--baseline", str(paths["single"]), "--baseline-name", "single",
                         "--method", f"tscaled={paths['tscaled']}",
                         "--method", f"ens_tscaled={paths['ens_tscaled']}", "--out", str(tmp_path / "table")])
    assert code == 0
    doc = json.loads((tmp_path / "table.json").read_text())
    md = (tmp_path / "table.md").read_text()
    for method, expected in REFERENCE_PERCENT.items():
        for metric, pair in expected.items():
            for k, g in enumerate(("familiar_test", "novel_test")):
                assert round_half_away(doc["rows"][method][g][metric]) == pair[k], (method, metric, g)
        line = next(l for l in md.splitlines() if l.startswith(f"| {method} |"))
        assert all(f"{v}%" in line for pair in expected.values() for v in pair)
    capsys.readouterr()


# -- 4 -----------------------------------------------------------------------

@pytest.mark.criterion(4, "gradient integrity")
@pytest.mark.parametrize("aleatoric", [False, True], ids=["plain", "aleatoric_head"])
def test_gradient_check_2_16_16_16_2(aleatoric):
    with Budget(30):
        assert worst_relative_error(aleatoric, widths=(16, 16, 16)) < 1e-4


# -- 5 and 6: one 10-seed, full-roster blobs run shared by both ----------------

def _per_seed(run, method, group, metric):
    return [run.per_seed[s]["methods"][method][group][metric] for s in ACCEPTANCE_SEEDS]


@pytest.mark.criterion(5, "toy novelty phenomenon")
def test_toy_run_completes_within_budget(blobs_run):
    assert blobs_run.wall_seconds <= 600
    assert sorted(blobs_run.per_seed) == ACCEPTANCE_SEEDS
    assert not any(r["failures"] for r in blobs_run.per_seed.values())
    assert all(r["audit"]["ok"] for r in blobs_run.per_seed.values())
    assert blobs_run.config.members == 10 and blobs_run.config.width == 128


@pytest.mark.criterion(5, "toy novelty phenomenon")
def test_single_model_worse_on_novel(blobs_run):
    fam = _per_seed(blobs_run, "single", "familiar_test", "nll")
    nov = _per_seed(blobs_run, "single", "novel_test", "nll")
    assert sum(n > f for n, f in zip(nov, fam)) >= 9


@pytest.mark.criterion(5, "toy novelty phenomenon")
def test_confident_errors_more_common_on_novel(blobs_run):
    fam = _per_seed(blobs_run, "single", "familiar_test", "e99")
    nov = _per_seed(blobs_run, "single", "novel_test", "e99")
    # a group with no row at >= 0.99 confidence has no E99 and cannot win the comparison
    wins = sum(n is not None and (f is None or n > f) for n, f in zip(nov, fam))
    assert wins >= 8


@pytest.mark.criterion(5, "toy novelty phenomenon")
def test_median_novel_nll_ordering(blobs_run):
    med = {m: float(np.median(_per_seed(blobs_run, m, "novel_test", "nll")))
           for m in ("ens_tscaled", "tscaled", "single")}
    assert med["ens_tscaled"] < med["tscaled"] < med["single"], med


@pytest.mark.criterion(5, "toy novelty phenomenon")
def test_g_distillation_no_worse_on_novel(blobs_run):
    g = _per_seed(blobs_run, "gdistill", "novel_test", "nll")
    d = _per_seed(blobs_run, "distill", "novel_test", "nll")
    assert sum(a <= b for a, b in zip(g, d)) >= 6


@pytest.mark.criterion(6, "sweep shape")
def test_novel_prefers_higher_temperature(blobs_run):
    best = [sweep_argmin(blobs_run, s, "single") for s in ACCEPTANCE_SEEDS]
    assert sum(b["novel_test"] >= b["familiar_test"] for b in best) >= 7


# -- 7 -----------------------------------------------------------------------

PROPERTY_CHECKS = sorted((name, fn) for name, fn in vars(test_properties).items() if name.startswith("test_"))
_property_seconds = []


@pytest.mark.criterion(7, "invariant property suites")
@pytest.mark.parametrize("check", [fn for _, fn in PROPERTY_CHECKS], ids=[n[5:] for n, _ in PROPERTY_CHECKS])
def test_property_suite(check):
    start = time.perf_counter()
    check()
    _property_seconds.append(time.perf_counter() - start)
    assert sum(_property_seconds) < 30
