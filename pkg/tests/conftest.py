import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from novelconf.predictions import PredictionSet, ProbabilitySet  # noqa: E402

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def _entry(item):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return None
    number, title = marker.args
    return _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "tests": 0})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_setup(item):
    # shared fixtures (the toy run) count toward the criterion that first needs them
    start = time.perf_counter()
    outcome = yield
    entry = _entry(item)
    if entry is not None:
        entry["seconds"] += time.perf_counter() - start
        entry["ok"] &= outcome.excinfo is None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    start = time.perf_counter()
    outcome = yield
    entry = _entry(item)
    if entry is None:
        return
    entry["ok"] &= outcome.excinfo is None
    entry["seconds"] += time.perf_counter() - start
    entry["tests"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(
            f"criterion {number}: {status}  {e['title']}  ({e['tests']} tests, {e['seconds']:.1f} s)")


def probs_set(probs, labels, groups=None):
    probs = np.asarray(probs, dtype=np.float64)
    n = len(probs)
    return ProbabilitySet(probs, labels, groups or ["familiar_test"] * n, [f"r{i}" for i in range(n)])


def pred_set(logits, labels, groups=None, novelty=None):
    logits = np.asarray(logits, dtype=np.float64)
    n = len(logits)
    return PredictionSet([f"r{i}" for i in range(n)], logits, labels, groups or ["val"] * n, novelty,
                         class_count=logits.shape[1])


def binary_conf(conf, labels_correct):
    """Two-class rows with max-probability ``conf`` on class 0; label 0 when correct."""
    probs = [[c, 1.0 - c] for c in conf]
    labels = [0 if ok else 1 for ok in labels_correct]
    return probs_set(probs, labels)


def t_fixture(scale: float):
    """4 binary rows, logits [scale*ln 3, 0], three labeled 0 and one labeled 1."""
    z = [[scale * np.log(3.0), 0.0]] * 4
    return pred_set(z, [0, 0, 0, 1])


ACCEPTANCE_SEEDS = list(range(10))


@pytest.fixture(scope="session")
def blobs_run():
    """Full roster, 10 seeds, blobs, default width: shared by the toy acceptance checks."""
    from novelconf.toybench import METHODS, ToySpec, run_experiment

    start = time.perf_counter()
    run = run_experiment(ToySpec("blobs"), list(METHODS), ACCEPTANCE_SEEDS)
    run.wall_seconds = time.perf_counter() - start
    return run


from hypothesis import settings  # noqa: E402

settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")
