"""Averaging member predictions, with per-member or shared temperature calibration."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import calibration
from .calibration import FixedTemperature
from .metrics import nll
from .predictions import PredictionSet, ProbabilitySet, softmax

DEFAULT_MEMBERS = 10


def _check_aligned(members: Sequence) -> None:
    if len(members) < 1:
        raise ValueError("ensemble needs at least one member")
    ref = members[0]
    for m in members[1:]:
        if tuple(m.ids) != tuple(ref.ids):
            raise ValueError("ensemble members are not aligned by id")
        if np.shape(getattr(m, "probs", getattr(m, "logits", None))) != \
                np.shape(getattr(ref, "probs", getattr(ref, "logits", None))):
            raise ValueError("ensemble members differ in shape")


def combine(members: Sequence[ProbabilitySet]) -> ProbabilitySet:
    """Elementwise mean of aligned member probabilities."""
    _check_aligned(members)
    mean = np.mean([m.probs for m in members], axis=0)
    ref = members[0]
    return ProbabilitySet(mean, ref.labels, ref.groups, ref.ids)


def ensemble_of_calibrated(members: Sequence[tuple[PredictionSet, PredictionSet]]):
    """Fit a temperature per member on its own validation set, apply, then average.

    Returns ``(probabilities, calibrators)``.
    """
    cals = [calibration.fit_temperature(val) for _, val in members]
    probs = [calibration.apply(cal, pset) for cal, (pset, _) in zip(cals, members)]
    return combine(probs), cals


def _ensemble_nll(logit_stack: np.ndarray, template: PredictionSet, t: float) -> float:
    mean = softmax(logit_stack, t).mean(axis=0)
    return nll(ProbabilitySet(mean, template.labels, template.groups, template.ids))


def fit_shared_ensemble_temperature(members: Sequence[PredictionSet], val_ids) -> FixedTemperature:
    """One temperature applied to every member before averaging, fit on ``val_ids`` rows."""
    _check_aligned(members)
    wanted = set(val_ids)
    index = [i for i, rid in enumerate(members[0].ids) if rid in wanted]
    if not index:
        raise ValueError("empty validation selection")
    val = [m.take(index) for m in members]
    if np.any(val[0].labels < 0):
        raise ValueError("validation rows must be labeled")
    stack = np.stack([m.logits for m in val])
    return FixedTemperature(calibration.minimize_temperature(lambda t: _ensemble_nll(stack, val[0], t)))


def apply_shared(cal, members: Sequence[PredictionSet]) -> ProbabilitySet:
    return combine([calibration.apply(cal, m) for m in members])
