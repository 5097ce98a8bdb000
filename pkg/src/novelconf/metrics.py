"""Prediction-quality measures: NLL, Brier error, label error, ECE and E99.

All functions take a :class:`~novelconf.predictions.ProbabilitySet` whose rows
are labeled. Lower is better for every measure.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .predictions import ProbabilitySet

CLIP_LOW = 0.001
CLIP_HIGH = 0.999
E99_THRESHOLD = 0.99
ECE_BINS = 10


@dataclass(frozen=True)
class EceBin:
    count: int
    mean_confidence: float
    accuracy: float


@dataclass(frozen=True)
class EceBreakdown:
    bins: tuple

    @property
    def num_bins(self) -> int:
        return len(self.bins)


@dataclass
class MetricsReport:
    nll: float
    brier: float
    label_error: float
    ece: float
    e99: float | None
    e99_count: int
    n: int
    ece_bins: list = field(default_factory=list, repr=False)

    def to_dict(self, breakdown: bool = False) -> dict:
        d = asdict(self)
        if not breakdown:
            d.pop("ece_bins")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            nll=float(d["nll"]), brier=float(d["brier"]), label_error=float(d["label_error"]),
            ece=float(d["ece"]), e99=None if d.get("e99") is None else float(d["e99"]),
            e99_count=int(d.get("e99_count", 0)), n=int(d.get("n", 0)),
            ece_bins=list(d.get("ece_bins", [])),
        )


def _require_labeled(probs: ProbabilitySet, allow_empty: bool = False) -> None:
    if len(probs) == 0 and not allow_empty:
        raise ValueError("metric undefined on an empty set")
    if np.any(probs.labels < 0):
        raise ValueError("metric requires labeled rows (found label -1)")


def true_label_confidence(probs: ProbabilitySet) -> np.ndarray:
    return probs.probs[np.arange(len(probs)), probs.labels]


def nll(probs: ProbabilitySet) -> float:
    _require_labeled(probs)
    p = np.clip(true_label_confidence(probs), CLIP_LOW, CLIP_HIGH)
    return float(-np.mean(np.log(p)))


def brier(probs: ProbabilitySet) -> float:
    """RMS shortfall of the true-label confidence from 1."""
    _require_labeled(probs)
    p = true_label_confidence(probs)
    return float(np.sqrt(np.mean((1.0 - p) ** 2)))


def label_error(probs: ProbabilitySet) -> float:
    _require_labeled(probs)
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return float(np.mean(np.argmax(probs.probs, axis=1) != probs.labels))


def ece(probs: ProbabilitySet, bins: int = ECE_BINS) -> tuple[float, EceBreakdown]:
    """Expected calibration error over equal-count confidence bins.

    Rows are stably sorted by max-probability and cut into ``bins`` contiguous
    groups whose sizes differ by at most one; the first ``N % bins`` groups get
    the extra element. Empty groups (``bins > N``) are dropped.
    """
    _require_labeled(probs)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    conf = probs.probs.max(axis=1)
    correct = (np.argmax(probs.probs, axis=1) == probs.labels).astype(np.float64)
    order = np.argsort(conf, kind="stable")
    n = len(conf)
    total = 0.0
    breakdown = []
    for chunk in np.array_split(order, bins):
        if len(chunk) == 0:
            continue
        acc = float(correct[chunk].mean())
        mc = float(conf[chunk].mean())
        total += len(chunk) / n * abs(acc - mc)
        breakdown.append(EceBin(len(chunk), mc, acc))
    return float(total), EceBreakdown(tuple(breakdown))


def e99(probs: ProbabilitySet, threshold: float = E99_THRESHOLD) -> tuple[float | None, int]:
    """Error rate among rows whose max-probability is at least ``threshold``.

    Returns ``(None, 0)`` when no row qualifies.
    """
    _require_labeled(probs, allow_empty=True)
    conf = probs.probs.max(axis=1)
    sel = conf >= threshold
    count = int(sel.sum())
    if count == 0:
        return None, 0
    wrong = np.argmax(probs.probs[sel], axis=1) != probs.labels[sel]
    return float(wrong.mean()), count


def evaluate(probs: ProbabilitySet, bins: int = ECE_BINS) -> MetricsReport:
    ece_value, breakdown = ece(probs, bins)
    e99_value, e99_count = e99(probs)
    return MetricsReport(
        nll=nll(probs),
        brier=brier(probs),
        label_error=label_error(probs),
        ece=ece_value,
        e99=e99_value,
        e99_count=e99_count,
        n=len(probs),
        ece_bins=[asdict(b) for b in breakdown.bins],
    )


def evaluate_by_group(probs: ProbabilitySet, bins: int = ECE_BINS) -> dict[str, MetricsReport]:
    """One report per group tag present, in first-appearance order; unsup rows skipped."""
    out = {}
    for tag in dict.fromkeys(probs.groups):
        if tag == "unsup":
            continue
        out[tag] = evaluate(probs.select_group(tag), bins)
    return out


def per_sample_nll(probs: ProbabilitySet) -> np.ndarray:
    return -np.log(np.clip(true_label_confidence(probs), CLIP_LOW, CLIP_HIGH))


def percent_reduction(baseline: float, method: float) -> float:
    """100 * (baseline - method) / baseline; negative when the method is worse."""
    if not baseline > 0 or not math.isfinite(baseline):
        raise ValueError(f"baseline must be positive, got {baseline}")
    return 100.0 * (baseline - method) / baseline
