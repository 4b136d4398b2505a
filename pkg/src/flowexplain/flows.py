"""Parsing, validation, sampling and text rendering of NetFlow records."""

from __future__ import annotations

import csv
import ipaddress
import random
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from .catalog import NON_NEGATIVE_UNITS, FeatureCatalog, FeatureSpec

FlowValue = int | Decimal | str

LABEL_BENIGN = "benign"
LABEL_MALICIOUS = "malicious"


class DatasetFormatError(ValueError):
    """Raised when the dataset header does not match the catalog."""


class RecordValidationError(ValueError):
    """Raised when a flow record violates the catalog contract."""


class SamplingError(ValueError):
    """Raised when a sample cannot be drawn as requested."""


@dataclass(frozen=True)
class FlowRecord:
    """One parsed NetFlow record.

    ``values`` maps every catalog feature name to its typed value
    (int, Decimal or str depending on the feature's value kind).
    """

    flow_id: str
    values: Mapping[str, FlowValue]
    label: str
    attack_class: str | None = None
    timestamp: int | None = None

    def __post_init__(self) -> None:
        if self.label not in (LABEL_BENIGN, LABEL_MALICIOUS):
            raise RecordValidationError(
                f"label must be '{LABEL_BENIGN}' or '{LABEL_MALICIOUS}', got {self.label!r}"
            )

    def with_timestamp(self, timestamp: int) -> "FlowRecord":
        return FlowRecord(
            flow_id=self.flow_id,
            values=self.values,
            label=self.label,
            attack_class=self.attack_class,
            timestamp=timestamp,
        )


@dataclass(frozen=True)
class ParseIssue:
    """A malformed cell or row, identified by data-row number and column."""

    row: int
    column: str
    message: str


@dataclass
class ParseReport:
    """Outcome of one dataset parse: issues are collected, never swallowed."""

    issues: list[ParseIssue] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    header_reordered: bool = False
    rows_total: int = 0
    rows_ok: int = 0

    @property
    def rows_quarantined(self) -> int:
        return self.rows_total - self.rows_ok

    def to_dict(self) -> dict:
        return {
            "rows_total": self.rows_total,
            "rows_ok": self.rows_ok,
            "rows_quarantined": self.rows_quarantined,
            "header_reordered": self.header_reordered,
            "notes": list(self.notes),
            "issues": [
                {"row": i.row, "column": i.column, "message": i.message} for i in self.issues
            ],
        }


def parse_value(text: str, spec: FeatureSpec) -> FlowValue:
    """Parse one cell according to the feature's value kind.

    Integer cells tolerate a redundant decimal suffix (``"6.0"`` parses
    as 6) because spreadsheet round-trips commonly introduce it.
    """
    text = text.strip()
    if spec.value_kind == "integer":
        if text == "":
            raise ValueError("empty value")
        try:
            value: int = int(text)
        except ValueError:
            try:
                dec = Decimal(text)
            except InvalidOperation:
                raise ValueError(f"not an integer: {text!r}") from None
            if dec != dec.to_integral_value():
                raise ValueError(f"not an integer: {text!r}") from None
            value = int(dec)
        _check_numeric_range(value, spec)
        return value
    if spec.value_kind == "decimal":
        try:
            dec = Decimal(text)
        except InvalidOperation:
            raise ValueError(f"not a decimal: {text!r}") from None
        _check_numeric_range(dec, spec)
        return dec
    if spec.value_kind == "address":
        try:
            ipaddress.ip_address(text)
        except ValueError:
            raise ValueError(f"not an IP address: {text!r}") from None
        return text
    return text


def _check_numeric_range(value: int | Decimal, spec: FeatureSpec) -> None:
    if spec.unit in NON_NEGATIVE_UNITS and value < 0:
        raise ValueError(f"negative value {value} for {spec.unit} feature")
    if spec.unit == "port" and not 0 <= value <= 65535:
        raise ValueError(f"port {value} out of range 0..65535")
    if spec.unit == "protocol-id" and spec.value_kind == "integer" and not 0 <= value <= 255:
        raise ValueError(f"protocol id {value} out of range 0..255")


def format_value(value: FlowValue) -> str:
    """Canonical text form of a typed value; inverse of :func:`parse_value`."""
    if isinstance(value, Decimal):
        return str(value)
    return str(value)


def parse_label(text: str) -> str:
    text = text.strip().lower()
    if text in ("0", LABEL_BENIGN):
        return LABEL_BENIGN
    if text in ("1", LABEL_MALICIOUS):
        return LABEL_MALICIOUS
    raise ValueError(f"label must be 0/1, got {text!r}")


def _open_stream(source: str | Path | TextIO) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    return source


def parse_dataset(
    source: str | Path | TextIO,
    catalog: FeatureCatalog,
) -> tuple[list[FlowRecord], ParseReport]:
    """Parse a comma-delimited NetFlow export into typed records.

    The header must contain exactly the catalog's feature columns plus the
    label column (the attack column is optional). Column order may differ
    from the catalog; a reorder is recorded in the report. Malformed rows
    are quarantined into the report with their row number and column, and
    parsing continues.
    """
    report = ParseReport()
    stream = _open_stream(source)
    close = isinstance(source, (str, Path))
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("dataset is empty: no header row") from None
        header = [h.strip() for h in header]
        _check_header(header, catalog, report)
        have_attack = catalog.attack_column in header
        index = {name: header.index(name) for name in header}
        per_row_specs = [(spec, index[spec.name]) for spec in catalog.features]
        label_idx = index[catalog.label_column]
        attack_idx = index[catalog.attack_column] if have_attack else None

        records: list[FlowRecord] = []
        for row_number, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            report.rows_total += 1
            if len(row) != len(header):
                report.issues.append(
                    ParseIssue(
                        row=row_number,
                        column="*",
                        message=f"expected {len(header)} columns, found {len(row)}",
                    )
                )
                continue
            values: dict[str, FlowValue] = {}
            row_ok = True
            for spec, col in per_row_specs:
                try:
                    values[spec.name] = parse_value(row[col], spec)
                except ValueError as exc:
                    report.issues.append(
                        ParseIssue(row=row_number, column=spec.name, message=str(exc))
                    )
                    row_ok = False
            try:
                label = parse_label(row[label_idx])
            except ValueError as exc:
                report.issues.append(
                    ParseIssue(row=row_number, column=catalog.label_column, message=str(exc))
                )
                row_ok = False
                label = LABEL_BENIGN
            attack: str | None = None
            if attack_idx is not None:
                attack = row[attack_idx].strip() or None
            if not row_ok:
                continue
            records.append(
                FlowRecord(
                    flow_id=f"row-{row_number:06d}",
                    values=values,
                    label=label,
                    attack_class=attack,
                )
            )
            report.rows_ok += 1
        return records, report
    finally:
        if close:
            stream.close()


def _check_header(header: list[str], catalog: FeatureCatalog, report: ParseReport) -> None:
    expected = set(catalog.feature_names) | {catalog.label_column}
    optional = {catalog.attack_column}
    present = set(header)
    if len(present) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DatasetFormatError(f"duplicate header columns: {dupes}")
    missing = sorted(expected - present)
    extra = sorted(present - expected - optional)
    if missing or extra:
        raise DatasetFormatError(
            "header/catalog mismatch: "
            f"missing columns {missing or 'none'}, unexpected columns {extra or 'none'}"
        )
    if catalog.attack_column not in present:
        report.notes.append(f"attack column {catalog.attack_column!r} absent; classes unknown")
    canonical = list(catalog.feature_names)
    observed = [h for h in header if h in set(canonical)]
    if observed != canonical:
        report.header_reordered = True
        report.notes.append("header column order differs from catalog order")


def validate_record(record: FlowRecord, catalog: FeatureCatalog) -> None:
    """Check that the record's key set equals the catalog feature set."""
    keys = set(record.values.keys())
    names = set(catalog.feature_names)
    missing = sorted(names - keys)
    extra = sorted(keys - names)
    if missing:
        raise RecordValidationError(f"record {record.flow_id} missing features: {missing}")
    if extra:
        raise RecordValidationError(f"record {record.flow_id} has unknown features: {extra}")


def render_flow_text(record: FlowRecord, catalog: FeatureCatalog) -> str:
    """Render a flow as one ``NAME: value`` line per feature, in catalog order.

    The output is byte-identical for identical inputs and excludes the
    label and attack columns.
    """
    validate_record(record, catalog)
    lines = [f"{spec.name}: {format_value(record.values[spec.name])}" for spec in catalog.features]
    return "\n".join(lines)


def sample_malicious(
    records: Iterable[FlowRecord],
    n: int,
    seed: int,
    stratified: bool = True,
) -> list[FlowRecord]:
    """Draw ``n`` malicious records, deterministically for a given seed.

    With ``stratified`` (the default) the draw is spread as evenly as
    possible across distinct attack classes, remainders going round-robin
    in class-name order; otherwise it is uniform over all malicious
    records. Output preserves the input ordering of the selected records.
    """
    if n < 0:
        raise SamplingError("sample size must be non-negative")
    indexed = [(i, r) for i, r in enumerate(records) if r.label == LABEL_MALICIOUS]
    if len(indexed) < n:
        raise SamplingError(
            f"cannot sample {n} malicious records: only {len(indexed)} available"
        )
    if n == 0:
        return []
    rng = random.Random(seed)
    if not stratified:
        chosen = rng.sample(indexed, n)
    else:
        groups: dict[str, list[tuple[int, FlowRecord]]] = {}
        for item in indexed:
            groups.setdefault(item[1].attack_class or "", []).append(item)
        classes = sorted(groups)
        quota = {c: 0 for c in classes}
        remaining = n
        while remaining > 0:
            allocated = False
            for c in classes:
                if remaining == 0:
                    break
                if quota[c] < len(groups[c]):
                    quota[c] += 1
                    remaining -= 1
                    allocated = True
            if not allocated:  # unreachable: total availability checked above
                raise SamplingError("insufficient records across attack classes")
        chosen = []
        for c in classes:
            chosen.extend(rng.sample(groups[c], quota[c]))
    chosen.sort(key=lambda item: item[0])
    return [r for _, r in chosen]


def assign_sequence_timestamps(
    records: list[FlowRecord], base_ms: int = 0, step_ms: int = 1
) -> list[FlowRecord]:
    """Give records without a timestamp a synthetic, strictly increasing one.

    NetFlow-v2 exports carry no timestamp column; the connection-history
    store still needs a stable ordering, so ingest and explain both derive
    the same synthetic sequence from the row order.
    """
    out = []
    for i, record in enumerate(records):
        if record.timestamp is None:
            out.append(record.with_timestamp(base_ms + i * step_ms))
        else:
            out.append(record)
    return out


def reparse_rendered(text: str, catalog: FeatureCatalog) -> dict[str, FlowValue]:
    """Parse a :func:`render_flow_text` block back into typed values."""
    values: dict[str, FlowValue] = {}
    for line in text.splitlines():
        name, _, raw = line.partition(":")
        name = name.strip()
        if name not in catalog:
            raise RecordValidationError(f"rendered line names unknown feature {name!r}")
        values[name] = parse_value(raw.strip(), catalog.get(name))
    return values
