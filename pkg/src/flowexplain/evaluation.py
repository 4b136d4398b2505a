"""Human-annotation ingestion and metric aggregation.

Explanations are judged on three independent criteria: correctness of the
argumentation, consistency with the flow's feature values, and absence of
fabricated facts. Verdicts come from human annotators; the harness
resolves multi-annotator agreement, excludes disagreements (reporting how
many), and aggregates percentages with standard errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, TextIO

METRICS = ("correctness", "feature_consistency", "factual_consistency")

_ANNOTATION_FIELDS = {
    "correctness": "correctness",
    "feature_consistency": "feature_consistent",
    "factual_consistency": "factually_consistent",
}


class AnnotationError(ValueError):
    """Raised for malformed annotation files or identifier mismatches."""


class AggregationError(ValueError):
    """Raised when annotations do not line up with the expected sample."""


@dataclass(frozen=True)
class ExplanationRecord:
    """One generated explanation as read back from a run log."""

    explanation_id: str
    flow_id: str
    mode: str
    model: str
    explanation: str
    prompt: dict
    usage: dict
    flow_values: dict
    findings: tuple[dict, ...] = ()
    timestamps: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.explanation:
            raise ValueError(f"explanation {self.explanation_id} has empty text")

    @classmethod
    def from_dict(cls, data: dict) -> "ExplanationRecord":
        return cls(
            explanation_id=data["explanation_id"],
            flow_id=data["flow_id"],
            mode=data["mode"],
            model=data["model"],
            explanation=data["explanation"],
            prompt=data.get("prompt", {}),
            usage=data.get("usage", {}),
            flow_values=data.get("flow", {}),
            findings=tuple(data.get("findings", ())),
            timestamps=data.get("timestamps", {}),
        )


@dataclass(frozen=True)
class Annotation:
    """One annotator's three verdicts for one explanation."""

    explanation_id: str
    annotator: str
    correctness: bool
    feature_consistent: bool
    factually_consistent: bool
    notes: str = ""

    def verdict(self, metric: str) -> bool:
        return getattr(self, _ANNOTATION_FIELDS[metric])


@dataclass
class AnnotationSet:
    """Parsed annotations plus per-explanation resolved verdicts.

    ``resolved[explanation_id][metric]`` is True/False on agreement and
    None when annotators disagreed (excluded from aggregation).
    """

    annotations: list[Annotation]
    resolved: dict[str, dict[str, bool | None]]
    disagreements: dict[str, int] = field(default_factory=dict)

    @property
    def explanation_ids(self) -> list[str]:
        return list(self.resolved.keys())

    def verdicts_for(self, metric: str) -> list[bool]:
        return [
            verdicts[metric]
            for verdicts in self.resolved.values()
            if verdicts[metric] is not None
        ]


def _parse_bool(value: object, field_name: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int,)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise AnnotationError(f"field {field_name!r} must be a boolean, got {value!r}")


def ingest_annotations(
    source: str | Path | TextIO | Iterable[dict],
    known_ids: set[str] | None = None,
) -> AnnotationSet:
    """Read line-delimited annotation records and resolve verdicts.

    Each line carries ``explanation_id``, ``annotator`` and the three
    boolean verdicts. When ``known_ids`` is given, an annotation for an
    unknown explanation is an error. Per metric: all annotators agreeing
    yields that verdict; any disagreement marks the metric unresolved for
    that explanation and bumps the disagreement count.
    """
    rows: list[dict]
    if isinstance(source, (str, Path)):
        rows = []
        with open(source, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise AnnotationError(f"malformed annotation on line {line_no}: {exc}")
    elif hasattr(source, "read"):
        rows = [json.loads(line) for line in source if line.strip()]
    else:
        rows = list(source)

    annotations: list[Annotation] = []
    for row in rows:
        try:
            explanation_id = row["explanation_id"]
            annotator = row["annotator"]
        except KeyError as exc:
            raise AnnotationError(f"annotation missing required field {exc}") from exc
        verdicts = {}
        for metric, field_name in _ANNOTATION_FIELDS.items():
            if field_name not in row:
                raise AnnotationError(
                    f"annotation for {explanation_id} by {annotator} "
                    f"missing verdict field {field_name!r}"
                )
            verdicts[metric] = _parse_bool(row[field_name], field_name)
        if known_ids is not None and explanation_id not in known_ids:
            raise AnnotationError(f"annotation references unknown explanation {explanation_id!r}")
        annotations.append(
            Annotation(
                explanation_id=explanation_id,
                annotator=annotator,
                correctness=verdicts["correctness"],
                feature_consistent=verdicts["feature_consistency"],
                factually_consistent=verdicts["factual_consistency"],
                notes=row.get("notes", ""),
            )
        )

    grouped: dict[str, list[Annotation]] = {}
    for annotation in annotations:
        grouped.setdefault(annotation.explanation_id, []).append(annotation)

    resolved: dict[str, dict[str, bool | None]] = {}
    disagreements = {metric: 0 for metric in METRICS}
    for explanation_id, group in grouped.items():
        verdict_map: dict[str, bool | None] = {}
        for metric in METRICS:
            votes = {a.verdict(metric) for a in group}
            if len(votes) == 1:
                verdict_map[metric] = votes.pop()
            else:
                verdict_map[metric] = None
                disagreements[metric] += 1
        resolved[explanation_id] = verdict_map
    return AnnotationSet(
        annotations=annotations, resolved=resolved, disagreements=disagreements
    )


@dataclass(frozen=True)
class MetricValue:
    """One percentage cell: value, dispersion and the counts behind it."""

    percent: Decimal
    standard_error: float
    positives: int
    resolved: int

    @property
    def se_one_decimal(self) -> float:
        return float(
            Decimal(str(self.standard_error)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
        )

    @property
    def se_integer(self) -> int:
        return int(
            Decimal(str(self.standard_error)).quantize(Decimal("1"), rounding=ROUND_HALF_UP)
        )

    def to_dict(self) -> dict:
        return {
            "percent": float(self.percent),
            "standard_error": self.se_one_decimal,
            "positives": self.positives,
            "resolved": self.resolved,
        }


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated metrics for one (model, prompt mode) cell."""

    model: str
    mode: str
    n: int
    correctness: MetricValue
    feature_consistency: MetricValue
    factual_consistency: MetricValue
    average_performance: Decimal
    excluded: dict[str, int] = field(default_factory=dict)

    def metric(self, name: str) -> MetricValue:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "n": self.n,
            "correctness": self.correctness.to_dict(),
            "feature_consistency": self.feature_consistency.to_dict(),
            "factual_consistency": self.factual_consistency.to_dict(),
            "average_performance": float(self.average_performance),
            "excluded": dict(self.excluded),
        }


def proportion_standard_error(positives: int, n: int) -> float:
    """Standard error of a proportion, in percentage points."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = positives / n
    return 100.0 * math.sqrt(p * (1.0 - p) / n)


def _metric_value(positives: int, resolved: int) -> MetricValue:
    if resolved <= 0:
        raise AggregationError("no resolved annotations for a metric")
    percent = (Decimal(100) * positives / Decimal(resolved)).quantize(Decimal("0.0001"))
    return MetricValue(
        percent=percent,
        standard_error=proportion_standard_error(positives, resolved),
        positives=positives,
        resolved=resolved,
    )


def truncate_two_decimals(value: Decimal) -> Decimal:
    return value.quantize(Decimal("0.01"), rounding=ROUND_DOWN)


def aggregate_metrics(
    annotation_set: AnnotationSet,
    n: int,
    model: str = "",
    mode: str = "",
) -> MetricsReport:
    """Aggregate resolved verdicts for one (model, mode) cell of size ``n``.

    Percentages are positives over resolved verdicts; the standard error
    is ``100 * sqrt(p * (1 - p) / n)``; the average performance column is
    the mean of the three percentages truncated to two decimals. The three
    criteria are aggregated independently.
    """
    if n <= 0:
        raise AggregationError("sample size n must be positive")
    annotated = len(annotation_set.resolved)
    if annotated != n:
        raise AggregationError(
            f"annotation count mismatch: {annotated} explanations annotated, expected {n}"
        )
    values: dict[str, MetricValue] = {}
    for metric in METRICS:
        verdicts = annotation_set.verdicts_for(metric)
        values[metric] = _metric_value(sum(verdicts), len(verdicts))
    average = truncate_two_decimals(
        (
            values["correctness"].percent
            + values["feature_consistency"].percent
            + values["factual_consistency"].percent
        )
        / Decimal(3)
    )
    return MetricsReport(
        model=model,
        mode=mode,
        n=n,
        correctness=values["correctness"],
        feature_consistency=values["feature_consistency"],
        factual_consistency=values["factual_consistency"],
        average_performance=average,
        excluded={
            metric: count for metric, count in annotation_set.disagreements.items() if count
        },
    )


def aggregate_counts(
    positives: dict[str, int],
    n: int,
    model: str = "",
    mode: str = "",
) -> MetricsReport:
    """Aggregate directly from per-metric positive counts (no exclusions)."""
    if n <= 0:
        raise AggregationError("sample size n must be positive")
    values = {}
    for metric in METRICS:
        count = positives[metric]
        if not 0 <= count <= n:
            raise AggregationError(f"positive count {count} outside 0..{n} for {metric}")
        values[metric] = _metric_value(count, n)
    average = truncate_two_decimals(
        (
            values["correctness"].percent
            + values["feature_consistency"].percent
            + values["factual_consistency"].percent
        )
        / Decimal(3)
    )
    return MetricsReport(
        model=model,
        mode=mode,
        n=n,
        correctness=values["correctness"],
        feature_consistency=values["feature_consistency"],
        factual_consistency=values["factual_consistency"],
        average_performance=average,
    )


def _format_percent(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(int(value))
    return str(value.quantize(Decimal("0.1")))


def _format_cell(metric: MetricValue) -> str:
    return f"{_format_percent(metric.percent)} (±{metric.se_integer})"


def render_metrics_table(reports: list[MetricsReport]) -> str:
    """Human-readable results table, one row per (model, mode) cell."""
    headers = (
        "Model",
        "Method",
        "Explanation Correctness (%)",
        "Feature Consistency (%)",
        "Factual Consistency (%)",
        "Avg. Perf. (%)",
    )
    rows = [headers]
    for report in reports:
        rows.append(
            (
                report.model,
                report.mode,
                _format_cell(report.correctness),
                _format_cell(report.feature_consistency),
                _format_cell(report.factual_consistency),
                str(report.average_performance),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
