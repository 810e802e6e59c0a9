"""Confidence-gated suggestion, risk-coverage analysis, and evaluation tables.

Suggestions are withheld when the maximum predicted class probability falls
below a threshold. Expert judgments of suggestion quality arrive from files
(categories a-d: equivalent / better / equal / worse); this module only
tabulates them, it never fabricates them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .classes import ResponseClass
from .classifier import SoftmaxModel, predict_proba
from .corpus import Turn

CATEGORIES = ("equivalent", "better", "equal", "worse")
CATEGORY_LETTERS = {"a": "equivalent", "b": "better", "c": "equal", "d": "worse"}


@dataclass(frozen=True)
class SuggestionResult:
    """Outcome of one suggestion attempt; confidence is always reported."""

    opted_out: bool
    class_id: int | None
    exemplar_text: str | None
    confidence: float


@dataclass(frozen=True)
class JudgmentRecord:
    context_id: str
    model: str
    category: str

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown judgment category {self.category!r}")


@dataclass(frozen=True)
class RiskCoveragePoint:
    threshold: float
    coverage: float
    bad_rate: float | None  # absent when nothing is answered


def suggest(
    model: SoftmaxModel,
    catalog: Sequence[ResponseClass],
    turns: Sequence[Turn],
    threshold: float,
) -> SuggestionResult:
    """Suggest the argmax class's exemplar, or opt out below the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    probs = predict_proba(model, turns, catalog=catalog)
    class_id = int(probs.argmax())  # ties resolve to the lowest class id
    confidence = float(probs[class_id])
    if confidence < threshold:
        return SuggestionResult(opted_out=True, class_id=None, exemplar_text=None, confidence=confidence)
    by_id = {c.id: c for c in catalog}
    return SuggestionResult(
        opted_out=False,
        class_id=class_id,
        exemplar_text=by_id[class_id].exemplar_text,
        confidence=confidence,
    )


def risk_coverage_curve(
    confidences: Sequence[float],
    judgments: Sequence[JudgmentRecord],
    thresholds: Sequence[float],
) -> list[RiskCoveragePoint]:
    """Coverage and bad-suggestion rate at each opt-out threshold.

    Coverage counts contexts with confidence >= threshold; the bad rate is the
    fraction of those judged "worse". Inputs align by position.
    """
    if len(confidences) != len(judgments):
        raise ValueError(
            f"{len(confidences)} confidences but {len(judgments)} judgments"
        )
    points = []
    n = len(confidences)
    for threshold in thresholds:
        answered = [j for c, j in zip(confidences, judgments) if c >= threshold]
        coverage = len(answered) / n if n else 0.0
        if answered:
            bad_rate = sum(1 for j in answered if j.category == "worse") / len(answered)
        else:
            bad_rate = None
        points.append(RiskCoveragePoint(threshold=threshold, coverage=coverage, bad_rate=bad_rate))
    return points


def threshold_for_coverage(confidences: Sequence[float], coverage: float) -> float:
    """Confidence threshold whose >= rule answers at least `coverage` of contexts.

    Nearest-rank empirical quantile: e.g. 0.5 yields the median confidence, so
    thresholds can be stated as target coverages.
    """
    if not confidences:
        raise ValueError("no confidences")
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must lie in [0, 1]")
    ranked = sorted(confidences, reverse=True)
    if coverage == 0.0:
        return math.nextafter(ranked[0], math.inf)
    rank = math.ceil(coverage * len(ranked))
    return ranked[rank - 1]


def uniqueness_per_100(suggestions: Sequence[str]) -> float:
    """Mean number of distinct suggestion texts per consecutive block of 100."""
    if not suggestions or len(suggestions) % 100 != 0:
        raise ValueError(f"need a positive multiple of 100 suggestions, got {len(suggestions)}")
    blocks = [suggestions[i : i + 100] for i in range(0, len(suggestions), 100)]
    return sum(len(set(block)) for block in blocks) / len(blocks)


def _round_percent(fraction: float) -> int:
    return math.floor(fraction * 100 + 0.5)  # half rounds up, unlike bankers' rounding


def tabulate_judgments(records: Sequence[JudgmentRecord]) -> dict[str, dict[str, int]]:
    """Per-model percentage of each judgment category, rounded to integers."""
    if not records:
        raise ValueError("no judgment records")
    by_model: dict[str, list[JudgmentRecord]] = {}
    for record in records:
        by_model.setdefault(record.model, []).append(record)
    table = {}
    for model in sorted(by_model):
        group = by_model[model]
        table[model] = {
            category: _round_percent(
                sum(1 for r in group if r.category == category) / len(group)
            )
            for category in CATEGORIES
        }
    return table


@dataclass
class ProcedureRun:
    """One labeling procedure's artifacts, for side-by-side comparison."""

    label: str
    catalog: Sequence[ResponseClass]
    model: SoftmaxModel
    judgments: Sequence[JudgmentRecord]
    suggestions: Sequence[str]


def compare_labeling_procedures(runs: Sequence[ProcedureRun]) -> list[dict]:
    """Class count, training size, bad-response rate, and suggestion variety per run."""
    rows = []
    for run in runs:
        if run.judgments:
            bad = sum(1 for j in run.judgments if j.category == "worse")
            bad_pct = _round_percent(bad / len(run.judgments))
        else:
            bad_pct = None
        rows.append(
            {
                "label": run.label,
                "classes": len(run.catalog),
                "train_examples": run.model.n_train_examples,
                "bad_pct": bad_pct,
                "unique_per_100": uniqueness_per_100(run.suggestions) if run.suggestions else None,
            }
        )
    return rows


def load_judgments(path: str | Path) -> list[JudgmentRecord]:
    """Read `context_id, model, category` CSV lines; categories may be letters a-d."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
            context_id, model, category = (f.strip() for f in row)
            category = CATEGORY_LETTERS.get(category, category)
            try:
                records.append(JudgmentRecord(context_id=context_id, model=model, category=category))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return records


def render_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """Aligned-text rendering of a list of row dicts."""
    def fmt(value: object) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.4g}"
        return str(value)

    widths = {c: max(len(c), *(len(fmt(r.get(c))) for r in rows)) if rows else len(c) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    for row in rows:
        lines.append("  ".join(fmt(row.get(c)).ljust(widths[c]) for c in columns))
    return "\n".join(lines)
