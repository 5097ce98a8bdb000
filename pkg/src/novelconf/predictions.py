"""Classifier outputs, dataset split tags, file I/O and softmax conversion."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

GROUPS = ("train", "val", "familiar_test", "novel_test", "unsup")
UNLABELED = -1


class PredictionFileError(ValueError):
    """Raised when a prediction file or record set violates the data model."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    logits: np.ndarray
    label: int
    group: str
    novelty: float | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_row(logits, label, group, novelty, class_count, line=None):
    if group not in GROUPS:
        raise PredictionFileError(f"unknown group {group!r}", line)
    if not np.all(np.isfinite(logits)):
        raise PredictionFileError("non-finite logit", line)
    if group == "unsup":
        if label != UNLABELED:
            raise PredictionFileError("unsup rows must carry label -1", line)
    elif not 0 <= label < class_count:
        raise PredictionFileError(f"label out of range: {label}", line)
    if novelty is not None and not math.isfinite(novelty):
        raise PredictionFileError("non-finite novelty score", line)


class PredictionSet:
    """Immutable, column-oriented collection of per-sample logits.

    Rows keep file order. ``novelty`` holds NaN where a record has no score.
    """

    def __init__(self, ids: Sequence[str], logits, labels, groups: Sequence[str],
                 novelty=None, class_count: int | None = None):
        logits = np.asarray(logits, dtype=np.float64)
        n = len(ids)
        if class_count is None:
            if logits.ndim != 2:
                raise PredictionFileError("cannot infer class count from empty logits")
            class_count = logits.shape[1]
        if n == 0:
            logits = logits.reshape(0, class_count)
        if class_count < 2:
            raise PredictionFileError("class count must be at least 2")
        if logits.shape != (n, class_count):
            raise PredictionFileError(f"logits shape {logits.shape} != ({n}, {class_count})")
        labels = np.asarray(labels, dtype=np.int64).reshape(n)
        if novelty is None:
            novelty = np.full(n, np.nan)
        novelty = np.asarray([np.nan if v is None else v for v in novelty], dtype=np.float64).reshape(n)
        groups = tuple(str(g) for g in groups)
        if len(groups) != n:
            raise PredictionFileError("groups length mismatch")
        ids = tuple(str(i) for i in ids)
        if len(set(ids)) != n:
            raise PredictionFileError("duplicate id")
        for i in range(n):
            nv = None if np.isnan(novelty[i]) else float(novelty[i])
            _check_row(logits[i], int(labels[i]), groups[i], nv, class_count)
        self.ids = ids
        self.logits = _frozen(logits)
        self.labels = _frozen(labels)
        self.groups = groups
        self.novelty = _frozen(novelty)
        self.class_count = int(class_count)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[PredictionRecord]:
        for i in range(len(self)):
            nv = None if np.isnan(self.novelty[i]) else float(self.novelty[i])
            yield PredictionRecord(self.ids[i], self.logits[i], int(self.labels[i]), self.groups[i], nv)

    @property
    def records(self) -> list[PredictionRecord]:
        return list(self)

    @property
    def has_novelty(self) -> bool:
        return bool(len(self)) and not np.any(np.isnan(self.novelty))

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord], class_count: int) -> "PredictionSet":
        return cls(
            [r.id for r in records],
            np.array([r.logits for r in records], dtype=np.float64).reshape(len(records), class_count),
            [r.label for r in records],
            [r.group for r in records],
            [r.novelty for r in records],
            class_count=class_count,
        )

    def take(self, index) -> "PredictionSet":
        index = np.asarray(index, dtype=np.int64)
        return PredictionSet(
            [self.ids[i] for i in index], self.logits[index], self.labels[index],
            [self.groups[i] for i in index], self.novelty[index], class_count=self.class_count,
        )

    def with_novelty(self, scores) -> "PredictionSet":
        return PredictionSet(self.ids, self.logits, self.labels, self.groups, scores,
                             class_count=self.class_count)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictionSet):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.groups == other.groups
            and self.class_count == other.class_count
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.logits, other.logits)
            and np.array_equal(self.novelty, other.novelty, equal_nan=True)
        )

    def __repr__(self) -> str:
        return f"PredictionSet(n={len(self)}, class_count={self.class_count})"


@dataclass(frozen=True)
class ProbabilitySet:
    """Row-stochastic probabilities aligned with their source records."""

    probs: np.ndarray
    labels: np.ndarray
    groups: tuple
    ids: tuple

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValueError("probabilities must be an N x C matrix")
        if len(probs) and (np.any(probs < 0) or np.any(probs > 1)
                           or np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-9):
            raise ValueError("probability rows must lie in [0, 1] and sum to 1")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]

    def take(self, index) -> "ProbabilitySet":
        index = np.asarray(index, dtype=np.int64)
        return ProbabilitySet(self.probs[index], self.labels[index],
                              [self.groups[i] for i in index], [self.ids[i] for i in index])

    def select_group(self, tag: str) -> "ProbabilitySet":
        return self.take([i for i, g in enumerate(self.groups) if g == tag])


def softmax(logits: np.ndarray, temperature=1.0) -> np.ndarray:
    """Row softmax of ``logits / temperature``; temperature may be per-row."""
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(temperature, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    z = z / t
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def to_probabilities(pset: PredictionSet) -> ProbabilitySet:
    return ProbabilitySet(softmax(pset.logits), pset.labels, pset.groups, pset.ids)


def filter_by_group(pset: PredictionSet, tag: str) -> PredictionSet:
    if tag not in GROUPS:
        raise ValueError(f"unknown group {tag!r}")
    return pset.take([i for i, g in enumerate(pset.groups) if g == tag])


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _header(class_count: int) -> list[str]:
    return ["id", "label", "group", "novelty"] + [f"logit_{c}" for c in range(class_count)]


def _num(x: float) -> str:
    return repr(float(x))


def save_predictions(pset: PredictionSet, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_header(pset.class_count))
            for r in pset:
                writer.writerow([r.id, r.label, r.group, "" if r.novelty is None else _num(r.novelty)]
                                + [_num(v) for v in r.logits])
    elif format == "json":
        rows = []
        for r in pset:
            row = {"id": r.id, "label": r.label, "group": r.group, "novelty": r.novelty}
            row.update({f"logit_{c}": float(v) for c, v in enumerate(r.logits)})
            rows.append(row)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"class_count": pset.class_count, "records": rows}, fh, indent=1)
    else:
        raise ValueError(f"unknown format {format!r}")


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise PredictionFileError(f"cannot parse {what} {text!r}", line) from None


def _parse_label(text, line: int) -> int:
    if text in ("", None):
        return UNLABELED
    try:
        return int(text)
    except (TypeError, ValueError):
        raise PredictionFileError(f"cannot parse label {text!r}", line) from None


def _build(rows, class_count: int) -> PredictionSet:
    """rows: (line, id, label, group, novelty, logits) tuples, validated one by one."""
    seen: dict[str, int] = {}
    for line, rid, label, group, novelty, logits in rows:
        if rid in seen:
            raise PredictionFileError(f"duplicate id {rid!r} (first seen at line {seen[rid]})", line)
        seen[rid] = line
        _check_row(np.asarray(logits), label, group, novelty, class_count, line)
    return PredictionSet(
        [r[1] for r in rows],
        np.array([r[5] for r in rows], dtype=np.float64).reshape(len(rows), class_count),
        [r[2] for r in rows], [r[3] for r in rows], [r[4] for r in rows],
        class_count=class_count,
    )


def _load_csv(path: Path) -> PredictionSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PredictionFileError("empty file (no header)", 1) from None
        class_count = len(header) - 4
        if class_count < 2 or header != _header(class_count):
            raise PredictionFileError(f"bad header {header!r}", 1)
        rows = []
        for line, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise PredictionFileError(
                    f"column count mismatch: expected {len(header)}, got {len(fields)}", line)
            rid, label, group, novelty = fields[:4]
            logits = [_parse_float(v, "logit", line) for v in fields[4:]]
            nv = None if novelty == "" else _parse_float(novelty, "novelty", line)
            rows.append((line, rid, _parse_label(label, line), group, nv, logits))
    return _build(rows, class_count)


def _load_json(path: Path) -> PredictionSet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    class_count = int(doc["class_count"])
    rows = []
    # "line" is the 1-based record index for JSON files
    for line, rec in enumerate(doc["records"], start=1):
        keys = {"id", "label", "group", "novelty"} | {f"logit_{c}" for c in range(class_count)}
        if set(rec) != keys:
            raise PredictionFileError("field mismatch", line)
        logits = [_parse_float(rec[f"logit_{c}"], "logit", line) for c in range(class_count)]
        nv = rec["novelty"]
        nv = None if nv is None else _parse_float(nv, "novelty", line)
        rows.append((line, str(rec["id"]), _parse_label(rec["label"], line), rec["group"], nv, logits))
    return _build(rows, class_count)


def load_predictions(path, format: str | None = None) -> PredictionSet:
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "csv":
        return _load_csv(path)
    if format == "json":
        return _load_json(path)
    raise ValueError(f"unknown format {format!r}")
