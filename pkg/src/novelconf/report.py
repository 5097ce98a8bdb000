"""Baseline-plus-percent-reduction comparison tables."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .metrics import MetricsReport, percent_reduction

REPORT_METRICS = ("nll", "brier", "label_error", "ece", "e99")
METRIC_TITLES = {"nll": "NLL", "brier": "Brier", "label_error": "Label Error", "ece": "ECE", "e99": "E99"}
GROUP_TITLES = {"familiar_test": "fam.", "novel_test": "novel", "val": "val", "train": "train"}


def round_half_away(x: float) -> int:
    """Nearest integer, halves rounded away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _values(report) -> dict:
    if isinstance(report, MetricsReport):
        return report.to_dict()
    return dict(report)


@dataclass
class ReportTable:
    baseline_name: str
    groups: list
    metrics: list
    baseline: dict                      # group -> metric -> absolute value
    rows: dict = field(default_factory=dict)  # method -> group -> metric -> exact percent or None

    def to_dict(self) -> dict:
        return {"baseline_name": self.baseline_name, "groups": self.groups, "metrics": self.metrics,
                "baseline": self.baseline, "rows": self.rows}

    def rounded(self, method: str) -> dict:
        return {g: {m: None if v is None else round_half_away(v) for m, v in row.items()}
                for g, row in self.rows[method].items()}

    def to_markdown(self, digits: int = 3) -> str:
        cols = [(m, g) for m in self.metrics for g in self.groups]
        head = "| | " + " | ".join(f"{METRIC_TITLES.get(m, m)} {GROUP_TITLES.get(g, g)}" for m, g in cols) + " |"
        lines = [head, "|---" * (len(cols) + 1) + "|"]

        def fmt_abs(v):
            return "n/a" if v is None else f"{v:.{digits}f}"

        lines.append(f"| {self.baseline_name} | " +
                     " | ".join(fmt_abs(self.baseline[g][m]) for m, g in cols) + " |")
        for method in self.rows:
            r = self.rounded(method)
            lines.append(f"| {method} | " + " | ".join(
                "n/a" if r[g][m] is None else f"{r[g][m]}%" for m, g in cols) + " |")
        return "\n".join(lines) + "\n"


def build_report(baseline: dict, methods: dict, baseline_name: str = "Baseline",
                 metrics=REPORT_METRICS) -> ReportTable:
    """``baseline``: group -> report; ``methods``: name -> (group -> report).

    Reports may be :class:`MetricsReport` instances or plain dicts with the same
    field names. Percentages are exact; rounding is a display concern.
    """
    groups = list(baseline)
    base = {g: {m: _values(baseline[g]).get(m) for m in metrics} for g in groups}
    table = ReportTable(baseline_name, groups, list(metrics), base)
    for name, reports in methods.items():
        if set(reports) != set(groups):
            raise ValueError(f"method {name!r} groups {sorted(reports)} differ from baseline {sorted(groups)}")
        row = {}
        for g in groups:
            vals = _values(reports[g])
            row[g] = {}
            for m in metrics:
                b, v = base[g][m], vals.get(m)
                row[g][m] = None if b is None or v is None or not b > 0 else percent_reduction(b, v)
        table.rows[name] = row
    return table
