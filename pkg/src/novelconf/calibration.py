"""Temperature scaling and novelty-weighted temperature scaling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import nll
from .predictions import PredictionSet, ProbabilitySet, softmax

T_MIN = 0.05
T_MAX = 10.0
COARSE_POINTS = 200
T_TOL = 1e-4
NOVELTY_T0_GRID = tuple(0.25 * k for k in range(1, 17))  # 0.25 .. 4.0
NOVELTY_T1_GRID = tuple(0.25 * k for k in range(0, 17))  # 0 .. 4.0


@dataclass(frozen=True)
class FixedTemperature:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"temperature must be positive, got {self.t}")

    def temperatures(self, pset: PredictionSet) -> np.ndarray:
        return np.full(len(pset), float(self.t))

    def to_dict(self) -> dict:
        return {"kind": "fixed", "t": self.t}


@dataclass(frozen=True)
class NoveltyLinearTemperature:
    """Per-sample temperature ``t0 + t1 * normalize(novelty)``."""

    t0: float
    t1: float
    p5: float
    p95: float

    def __post_init__(self):
        if not self.t0 > 0 or not self.t0 + self.t1 > 0:
            raise ValueError("temperature must stay positive over normalized novelty [0, 1]")
        if self.p5 > self.p95:
            raise ValueError("p5 must not exceed p95")

    def temperatures(self, pset: PredictionSet) -> np.ndarray:
        if len(pset) and not pset.has_novelty:
            raise ValueError("novelty-weighted scaling needs a novelty score on every record")
        return self.t0 + self.t1 * normalize_novelty(pset.novelty, self.p5, self.p95)

    def to_dict(self) -> dict:
        return {"kind": "novelty_linear", "t0": self.t0, "t1": self.t1, "p5": self.p5, "p95": self.p95}


Calibrator = FixedTemperature | NoveltyLinearTemperature


def calibrator_from_dict(d: dict) -> Calibrator:
    kind = d.get("kind")
    if kind == "fixed":
        return FixedTemperature(float(d["t"]))
    if kind == "novelty_linear":
        return NoveltyLinearTemperature(float(d["t0"]), float(d["t1"]), float(d["p5"]), float(d["p95"]))
    raise ValueError(f"unknown calibrator kind {kind!r}")


def save_calibrator(cal: Calibrator, path) -> None:
    Path(path).write_text(json.dumps(cal.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_calibrator(path) -> Calibrator:
    return calibrator_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def apply(cal: Calibrator, pset: PredictionSet) -> ProbabilitySet:
    t = cal.temperatures(pset)
    return ProbabilitySet(softmax(pset.logits, t), pset.labels, pset.groups, pset.ids)


def scaled_nll(pset: PredictionSet, t) -> float:
    return nll(ProbabilitySet(softmax(pset.logits, t), pset.labels, pset.groups, pset.ids))


def minimize_temperature(objective: Callable[[float], float],
                         t_min: float = T_MIN, t_max: float = T_MAX) -> float:
    """Minimize a 1-D objective over T: log-spaced grid, then golden-section.

    The golden-section search runs on the bracket formed by the best grid point's
    neighbours until the bracket is narrower than ``T_TOL``. The returned T is
    never worse than the best grid point, and T = 1 is always a candidate.
    """
    grid = np.unique(np.append(np.geomspace(t_min, t_max, COARSE_POINTS), 1.0))
    values = np.array([objective(float(t)) for t in grid])
    k = int(np.argmin(values))
    best_t, best_v = float(grid[k]), float(values[k])
    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, len(grid) - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > T_TOL:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    t_star = 0.5 * (a + b)
    v_star = objective(t_star)
    if v_star <= best_v:
        return t_star
    return best_t


def _labeled_nonempty(pset: PredictionSet, what: str) -> None:
    if len(pset) == 0:
        raise ValueError(f"empty {what} set")
    if np.any(pset.labels < 0):
        raise ValueError(f"{what} set contains unlabeled rows")


def fit_temperature(val: PredictionSet) -> FixedTemperature:
    """Single temperature minimizing clipped NLL on ``val``."""
    _labeled_nonempty(val, "validation")
    return FixedTemperature(minimize_temperature(lambda t: scaled_nll(val, t)))


def normalize_novelty(raw, p5: float, p95: float):
    """Map raw novelty scores so p5 -> 0 and p95 -> 1, clipped to [0, 1].

    If ``p5 == p95`` every score maps to 0.5.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if p95 == p5:
        out = np.full(raw.shape, 0.5)
    else:
        out = np.clip((raw - p5) / (p95 - p5), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fit_novelty_percentiles(train_scores) -> tuple[float, float]:
    scores = np.asarray(train_scores, dtype=np.float64)
    if scores.size < 2:
        raise ValueError("need at least 2 novelty scores")
    # linear interpolation between order statistics
    p5, p95 = np.percentile(scores, [5.0, 95.0])
    return float(p5), float(p95)


def fit_novelty_scaling(val: PredictionSet, percentiles: tuple[float, float]) -> NoveltyLinearTemperature:
    """Exhaustive (T0, T1) grid search on validation NLL.

    Ties go to the smaller T1, then the smaller T0.
    """
    _labeled_nonempty(val, "validation")
    if not val.has_novelty:
        raise ValueError("validation rows need novelty scores")
    p5, p95 = percentiles
    u = normalize_novelty(val.novelty, p5, p95)
    best = None
    for t1 in NOVELTY_T1_GRID:
        for t0 in NOVELTY_T0_GRID:
            v = scaled_nll(val, t0 + t1 * u)
            if best is None or v < best[0]:
                best = (v, t0, t1)
    return NoveltyLinearTemperature(best[1], best[2], p5, p95)


def sweep(pset: PredictionSet, temperatures) -> list[tuple[float, float]]:
    """(T, NLL) for each temperature; helper for calibration curves."""
    return [(float(t), scaled_nll(pset, float(t))) for t in temperatures]
