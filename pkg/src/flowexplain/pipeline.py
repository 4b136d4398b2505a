"""End-to-end orchestration shared by the command line and the service.

The pipeline is: ingest a labelled NetFlow export and bootstrap the
connection-history store, sample malicious flows, build (optionally
augmented) prompts, generate explanations through the configured backend,
pre-flag the output with the consistency checkers, and aggregate human
annotations into a results table.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable

from .catalog import FeatureCatalog, default_catalog, load_catalog
from .checkers import run_all_checks
from .enrichment import ContextBuilder
from .evaluation import (
    AggregationError,
    AnnotationSet,
    ExplanationRecord,
    MetricsReport,
    aggregate_metrics,
    ingest_annotations,
    render_metrics_table,
)
from .flows import (
    FlowRecord,
    LABEL_MALICIOUS,
    ParseReport,
    assign_sequence_timestamps,
    format_value,
    parse_dataset,
    parse_label,
    parse_value,
    sample_malicious,
)
from .gateway import (
    Gateway,
    GenerationRequest,
    HTTPBackend,
    HTTPBackendProfile,
    MockBackend,
    PricingTable,
    UsageLedger,
    estimate_cost,
)
from .history import FlowHistoryEntry, FlowHistoryStore
from .prompts import (
    MODE_AUGMENTED,
    MODE_BASIC,
    PromptBundle,
    PromptTemplate,
    build_augmented_prompt,
    build_basic_prompt,
    default_augmented_template,
    default_basic_template,
    enforce_budget,
    load_template,
)
from .providers import (
    DisabledProvider,
    FixtureGeoProvider,
    FixtureThreatProvider,
    HTTPGeoProvider,
    HTTPProviderProfile,
    HTTPThreatProvider,
)

MODES = (MODE_BASIC, MODE_AUGMENTED)


class ConfigError(ValueError):
    """Raised when the pipeline configuration is unusable."""


class PipelineError(RuntimeError):
    """Raised for fatal (whole-run) pipeline failures."""


@dataclass
class PipelineConfig:
    """Declarative run configuration; secrets come from the environment."""

    dataset: Path
    store: Path | str = ":memory:"
    output_dir: Path = Path("out")
    catalog: Path | None = None
    basic_template: Path | None = None
    augmented_template: Path | None = None
    geo_provider: dict = field(default_factory=lambda: {"kind": "disabled"})
    cti_provider: dict = field(default_factory=lambda: {"kind": "disabled"})
    backend: dict = field(default_factory=lambda: {"kind": "mock"})
    pricing: dict = field(
        default_factory=lambda: {"input_per_million": "2.50", "output_per_million": "10.00"}
    )
    k_history: int = 5
    token_budget: int = 2048
    sample_size: int = 50
    seed: int = 7
    workers: int = 4
    max_in_flight: int = 4
    temperature: float = 0.7
    max_tokens: int = 2048
    stratified_sampling: bool = True
    history_include_benign: bool = True
    store_max_entries: int | None = None

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent, **overrides)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None, **overrides) -> "PipelineConfig":
        def resolve(value: str | None) -> Path | None:
            if value is None:
                return None
            p = Path(value)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        known = {
            "dataset": resolve(raw.get("dataset")),
            "store": raw.get("store", ":memory:"),
            "output_dir": resolve(raw.get("output_dir")) or Path("out"),
            "catalog": resolve(raw.get("catalog")),
            "basic_template": resolve(raw.get("basic_template")),
            "augmented_template": resolve(raw.get("augmented_template")),
            "geo_provider": raw.get("geo_provider", {"kind": "disabled"}),
            "cti_provider": raw.get("cti_provider", {"kind": "disabled"}),
            "backend": raw.get("backend", {"kind": "mock"}),
            "pricing": raw.get(
                "pricing", {"input_per_million": "2.50", "output_per_million": "10.00"}
            ),
        }
        if known["store"] != ":memory:":
            store_path = resolve(str(known["store"]))
            known["store"] = store_path
        for key in (
            "k_history",
            "token_budget",
            "sample_size",
            "seed",
            "workers",
            "max_in_flight",
            "temperature",
            "max_tokens",
            "stratified_sampling",
            "history_include_benign",
            "store_max_entries",
        ):
            if key in raw:
                known[key] = raw[key]
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        known.update({k: v for k, v in overrides.items() if v is not None})
        if known["dataset"] is None:
            raise ConfigError("config must name a dataset path")
        config = cls(**known)
        config.validate()
        return config

    def validate(self) -> None:
        for label, path in (
            ("dataset", self.dataset),
            ("catalog", self.catalog),
            ("basic_template", self.basic_template),
            ("augmented_template", self.augmented_template),
        ):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"configured {label} path does not exist: {path}")
        for provider in (self.geo_provider, self.cti_provider):
            fixture = provider.get("fixture")
            if provider.get("kind") == "fixture" and (
                fixture is None or not Path(fixture).exists()
            ):
                raise ConfigError(f"fixture provider path does not exist: {fixture}")
        if self.k_history < 0:
            raise ConfigError("k_history must be non-negative")
        if self.token_budget <= 0:
            raise ConfigError("token_budget must be positive")
        if not 0 <= self.temperature <= 2:
            raise ConfigError("temperature must be within [0, 2]")


def _build_geo_provider(config: dict):
    kind = config.get("kind", "disabled")
    if kind == "disabled":
        return DisabledProvider("geo-disabled")
    if kind == "fixture":
        return FixtureGeoProvider(
            config["fixture"], provider_id=config.get("provider_id", "fixture-geo")
        )
    if kind == "http":
        profile = HTTPProviderProfile(
            provider_id=config.get("provider_id", "http-geo"),
            url_template=config["url_template"],
            field_paths=config.get("field_paths", {}),
            auth_env=config.get("auth_env"),
            timeout_ms=int(config.get("timeout_ms", 5000)),
        )
        return HTTPGeoProvider(profile)
    raise ConfigError(f"unknown geolocation provider kind {kind!r}")


def _build_cti_provider(config: dict):
    kind = config.get("kind", "disabled")
    if kind == "disabled":
        return DisabledProvider("cti-disabled")
    if kind == "fixture":
        return FixtureThreatProvider(
            config["fixture"], provider_id=config.get("provider_id", "fixture-cti")
        )
    if kind == "http":
        profile = HTTPProviderProfile(
            provider_id=config.get("provider_id", "http-cti"),
            url_template=config["url_template"],
            field_paths=config.get("field_paths", {}),
            auth_env=config.get("auth_env"),
            timeout_ms=int(config.get("timeout_ms", 5000)),
        )
        return HTTPThreatProvider(profile)
    raise ConfigError(f"unknown threat-intel provider kind {kind!r}")


def build_backend(config: dict):
    kind = config.get("kind", "mock")
    if kind == "mock":
        canned = config.get("canned")
        if isinstance(canned, str):
            canned = {
                row["key"]: row["text"]
                for row in map(json.loads, Path(canned).read_text().splitlines())
                if row
            }
        return MockBackend(canned=canned, model=config.get("model", "mock-model"))
    if kind in ("http", "local"):
        profile = HTTPBackendProfile(
            backend_id=config.get("backend_id", kind),
            url=config["url"],
            model=config.get("model", "default"),
            auth_env=config.get("auth_env"),
            timeout_s=float(config.get("timeout_s", 60.0)),
            text_path=config.get("text_path", "choices.0.message.content"),
            prompt_tokens_path=config.get("prompt_tokens_path", "usage.prompt_tokens"),
            completion_tokens_path=config.get(
                "completion_tokens_path", "usage.completion_tokens"
            ),
        )
        return HTTPBackend(profile)
    raise ConfigError(f"unknown backend kind {kind!r}")


def pricing_from_config(config: dict) -> PricingTable:
    return PricingTable.per_million(
        config.get("input_per_million", "2.50"), config.get("output_per_million", "10.00")
    )


def history_entry_for(record: FlowRecord) -> FlowHistoryEntry:
    """Derive the store entry for one parsed flow."""
    values = record.values
    summary = (
        f"{values.get('IN_BYTES', '?')}B in / {values.get('OUT_BYTES', '?')}B out, "
        f"{values.get('FLOW_DURATION_MILLISECONDS', '?')} ms"
    )
    return FlowHistoryEntry(
        flow_id=record.flow_id,
        timestamp=record.timestamp if record.timestamp is not None else 0,
        src_ip=str(values["IPV4_SRC_ADDR"]),
        dst_ip=str(values["IPV4_DST_ADDR"]),
        l4_protocol_id=int(values["PROTOCOL"]),
        label=record.label,
        summary=summary,
    )


@dataclass
class IngestSummary:
    total: int
    malicious: int
    benign: int
    quarantined: int
    store_entries: int
    report_path: Path | None = None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "malicious": self.malicious,
            "benign": self.benign,
            "quarantined": self.quarantined,
            "store_entries": self.store_entries,
            "report_path": str(self.report_path) if self.report_path else None,
        }


class Runtime:
    """Loaded catalog, templates, providers, store and gateway for one run."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.catalog: FeatureCatalog = (
            load_catalog(config.catalog) if config.catalog else default_catalog()
        )
        self.basic_template: PromptTemplate = (
            load_template(config.basic_template, "basic-custom", ("flow",))
            if config.basic_template
            else default_basic_template()
        )
        self.augmented_template: PromptTemplate = (
            load_template(
                config.augmented_template,
                "augmented-custom",
                ("spec", "protocols", "ip_knowledge"),
            )
            if config.augmented_template
            else default_augmented_template()
        )
        self.store = FlowHistoryStore(config.store, max_entries=config.store_max_entries)
        self.geo_provider = _build_geo_provider(config.geo_provider)
        self.cti_provider = _build_cti_provider(config.cti_provider)
        self.context_builder = ContextBuilder(
            self.catalog,
            store=self.store,
            geo_provider=self.geo_provider,
            cti_provider=self.cti_provider,
            k=config.k_history,
            history_labels=None if config.history_include_benign else ("malicious", "unlabeled"),
        )
        self.backend = build_backend(config.backend)
        self.gateway = Gateway(self.backend, max_in_flight=config.max_in_flight)
        self.pricing = pricing_from_config(config.pricing)
        self._sequence_lock = threading.Lock()

    def close(self) -> None:
        self.store.close()

    # -- dataset ------------------------------------------------------------

    def load_records(self) -> tuple[list[FlowRecord], ParseReport]:
        records, report = parse_dataset(self.config.dataset, self.catalog)
        return assign_sequence_timestamps(records), report

    # -- explanation --------------------------------------------------------

    def build_prompt(self, record: FlowRecord, mode: str) -> PromptBundle:
        if mode == MODE_BASIC:
            bundle = build_basic_prompt(record, self.catalog, self.basic_template)
        elif mode == MODE_AUGMENTED:
            context = self.context_builder.build(record)
            bundle = build_augmented_prompt(
                record, context, self.catalog, self.basic_template, self.augmented_template
            )
        else:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        return enforce_budget(bundle, self.config.token_budget)

    def explain_record(
        self,
        record: FlowRecord,
        mode: str,
        explanation_id: str,
        append_history: bool = False,
    ) -> dict:
        """Explain one malicious flow; returns the loggable record."""
        if record.label != LABEL_MALICIOUS:
            raise PipelineError(f"flow {record.flow_id} is not malicious; only malicious "
                                "flows are explained")
        started = _utc_now()
        bundle = self.build_prompt(record, mode)
        request = GenerationRequest(
            prompt=bundle.text,
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            request_id=explanation_id,
        )
        result = self.gateway.generate(request)
        findings = run_all_checks(result.text, record, self.catalog)
        if append_history:
            self.store.append(self._entry_for_external(record))
        return {
            "explanation_id": explanation_id,
            "flow_id": record.flow_id,
            "mode": mode,
            "model": result.model,
            "backend": result.backend_id,
            "attack_class": record.attack_class,
            "flow": {name: format_value(value) for name, value in record.values.items()},
            "prompt": bundle.to_record(),
            "explanation": result.text,
            "usage": result.usage.to_dict(),
            "latency_ms": result.latency_ms,
            "findings": [finding.to_dict() for finding in findings],
            "status": "ok",
            "error": None,
            "timestamps": {"started": started, "finished": _utc_now()},
        }

    def _entry_for_external(self, record: FlowRecord) -> FlowHistoryEntry:
        if record.timestamp is not None:
            return history_entry_for(record)
        with self._sequence_lock:
            stats_total = self.store.count()
        return history_entry_for(record.with_timestamp(stats_total))

    def record_from_row(self, row: dict, flow_id: str) -> FlowRecord:
        """Build a validated record from a dataset-shaped column mapping."""
        errors: dict[str, str] = {}
        values = {}
        for spec in self.catalog.features:
            if spec.name not in row:
                errors[spec.name] = "missing"
                continue
            try:
                values[spec.name] = parse_value(str(row[spec.name]), spec)
            except ValueError as exc:
                errors[spec.name] = str(exc)
        extra = set(row) - set(self.catalog.feature_names)
        extra -= {self.catalog.label_column, self.catalog.attack_column}
        for name in sorted(extra):
            errors[name] = "unknown feature"
        if errors:
            raise FieldValidationError(errors)
        label_raw = row.get(self.catalog.label_column)
        if label_raw is None:
            label = LABEL_MALICIOUS  # stub classifier: unlabelled posts are assumed malicious
        else:
            try:
                label = parse_label(str(label_raw))
            except ValueError as exc:
                raise FieldValidationError({self.catalog.label_column: str(exc)}) from exc
        attack = row.get(self.catalog.attack_column)
        return FlowRecord(
            flow_id=flow_id,
            values=values,
            label=label,
            attack_class=str(attack) if attack is not None else None,
        )


class FieldValidationError(ValueError):
    """Per-field problems with an externally supplied flow."""

    def __init__(self, errors: dict[str, str]):
        super().__init__(f"invalid flow fields: {sorted(errors)}")
        self.errors = errors


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _catalog_for(config: PipelineConfig) -> FeatureCatalog:
    return load_catalog(config.catalog) if config.catalog else default_catalog()


def run_ingest(config: PipelineConfig, rebuild_store: bool = True) -> IngestSummary:
    """Parse the dataset, bootstrap the history store, write a parse report."""
    dataset = Path(config.dataset)
    if not dataset.exists():
        raise PipelineError(f"dataset not readable: {dataset}")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    if dataset.stat().st_size == 0 or dataset.read_text(encoding="utf-8").strip() == "":
        return IngestSummary(total=0, malicious=0, benign=0, quarantined=0, store_entries=0)

    runtime = Runtime(config)
    try:
        records, report = runtime.load_records()
        if rebuild_store:
            runtime.store.clear()
        runtime.store.append_many(history_entry_for(record) for record in records)
        report_path = config.output_dir / "parse_report.json"
        report_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        malicious = sum(1 for r in records if r.label == LABEL_MALICIOUS)
        return IngestSummary(
            total=report.rows_total,
            malicious=malicious,
            benign=len(records) - malicious,
            quarantined=report.rows_quarantined,
            store_entries=runtime.store.count(),
            report_path=report_path,
        )
    finally:
        runtime.close()


def run_sample(config: PipelineConfig, out_path: Path | None = None) -> dict:
    """Draw the evaluation sample and write its flow ids to a sample file."""
    records, _ = parse_dataset(config.dataset, _catalog_for(config))
    records = assign_sequence_timestamps(records)
    sample = sample_malicious(
        records, config.sample_size, config.seed, stratified=config.stratified_sampling
    )
    payload = {
        "n": config.sample_size,
        "seed": config.seed,
        "stratified": config.stratified_sampling,
        "flow_ids": [record.flow_id for record in sample],
    }
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return payload


@dataclass
class ExplainRunResult:
    run_id: str
    log_path: Path
    ledger_path: Path
    written: int
    failed: int
    ledger: UsageLedger


def _select_records(
    records: list[FlowRecord],
    flow_ids: Iterable[str] | None,
    sample_file: Path | None,
    config: PipelineConfig,
) -> list[FlowRecord]:
    by_id = {record.flow_id: record for record in records}
    if flow_ids:
        missing = [fid for fid in flow_ids if fid not in by_id]
        if missing:
            raise PipelineError(f"unknown flow ids: {missing}")
        return [by_id[fid] for fid in flow_ids]
    if sample_file is not None:
        payload = json.loads(Path(sample_file).read_text(encoding="utf-8"))
        wanted = payload["flow_ids"]
        missing = [fid for fid in wanted if fid not in by_id]
        if missing:
            raise PipelineError(f"sample file references unknown flow ids: {missing}")
        return [by_id[fid] for fid in wanted]
    return sample_malicious(
        records, config.sample_size, config.seed, stratified=config.stratified_sampling
    )


def run_explain(
    config: PipelineConfig,
    mode: str,
    flow_ids: Iterable[str] | None = None,
    sample_file: Path | None = None,
    run_id: str | None = None,
    progress: Callable[[str], None] | None = None,
) -> ExplainRunResult:
    """Explain the selected flows and append records to a run log.

    Outputs preserve the selection order regardless of worker scheduling.
    Per-flow failures are recorded in the log and do not abort the batch.
    """
    if mode not in MODES:
        raise PipelineError(f"mode must be one of {MODES}, got {mode!r}")
    runtime = Runtime(config)
    try:
        records, _ = runtime.load_records()
        selected = _select_records(records, flow_ids, sample_file, config)

        run_id = run_id or datetime.now(timezone.utc).strftime("run-%Y%m%dT%H%M%SZ")
        config.output_dir.mkdir(parents=True, exist_ok=True)
        log_path = config.output_dir / f"{run_id}.jsonl"
        ledger_path = config.output_dir / f"{run_id}.ledger.json"

        def explain_one(item: tuple[int, FlowRecord]) -> dict:
            index, record = item
            explanation_id = f"{run_id}:{record.flow_id}"
            try:
                return runtime.explain_record(record, mode, explanation_id)
            except Exception as exc:  # per-flow failure: recorded, run continues
                return {
                    "explanation_id": explanation_id,
                    "flow_id": record.flow_id,
                    "mode": mode,
                    "model": getattr(runtime.backend, "model", ""),
                    "backend": getattr(runtime.backend, "backend_id", ""),
                    "status": "error",
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                    "timestamps": {"started": _utc_now(), "finished": _utc_now()},
                }

        written = failed = 0
        with open(log_path, "w", encoding="utf-8") as log:
            if config.workers > 1 and len(selected) > 1:
                with ThreadPoolExecutor(max_workers=config.workers) as pool:
                    outcomes = pool.map(explain_one, enumerate(selected))
                    for outcome in outcomes:
                        log.write(json.dumps(outcome, sort_keys=True) + "\n")
                        written += 1
                        failed += outcome["status"] != "ok"
                        if progress:
                            progress(outcome["flow_id"])
            else:
                for item in enumerate(selected):
                    outcome = explain_one(item)
                    log.write(json.dumps(outcome, sort_keys=True) + "\n")
                    written += 1
                    failed += outcome["status"] != "ok"
                    if progress:
                        progress(outcome["flow_id"])

        ledger_path.write_text(
            json.dumps(runtime.gateway.ledger.to_dict(), indent=2), encoding="utf-8"
        )
        return ExplainRunResult(
            run_id=run_id,
            log_path=log_path,
            ledger_path=ledger_path,
            written=written,
            failed=failed,
            ledger=runtime.gateway.ledger,
        )
    finally:
        runtime.close()


def read_explanation_log(path: str | Path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def recheck_explanations(entries: list[dict], catalog: FeatureCatalog) -> list[dict]:
    """Re-run the consistency checkers over logged explanations.

    The flow values stored in the log are re-typed through the catalog so
    the findings are computed against the same record the prompt used.
    """
    findings_records = []
    for entry in entries:
        values = {
            name: parse_value(text, catalog.get(name))
            for name, text in entry.get("flow", {}).items()
            if name in catalog
        }
        record = FlowRecord(
            flow_id=entry["flow_id"],
            values=values,
            label=LABEL_MALICIOUS,
            attack_class=entry.get("attack_class"),
        )
        findings = run_all_checks(entry["explanation"], record, catalog)
        findings_records.append(
            {
                "explanation_id": entry["explanation_id"],
                "model": entry["model"],
                "mode": entry["mode"],
                "findings": [finding.to_dict() for finding in findings],
            }
        )
    return findings_records


def run_evaluate(
    config: PipelineConfig,
    explanations_path: Path,
    annotations_path: Path,
) -> tuple[list[MetricsReport], str, Path]:
    """Re-check explanations, resolve annotations and emit the results table."""
    entries = [e for e in read_explanation_log(explanations_path) if e.get("status") == "ok"]
    if not entries:
        raise PipelineError(f"no successful explanations in {explanations_path}")
    for entry in entries:  # validates shape and non-empty text
        ExplanationRecord.from_dict(entry)
    known_ids = {entry["explanation_id"] for entry in entries}

    catalog = _catalog_for(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    findings_records = recheck_explanations(entries, catalog)
    findings_path = config.output_dir / "findings.jsonl"
    with open(findings_path, "w", encoding="utf-8") as fh:
        for row in findings_records:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    annotation_set = ingest_annotations(annotations_path, known_ids=known_ids)
    if not annotation_set.annotations:
        raise PipelineError("no resolved annotations: the annotations file is empty")

    cells: dict[tuple[str, str], list[dict]] = {}
    for entry in entries:
        cells.setdefault((entry["model"], entry["mode"]), []).append(entry)

    reports: list[MetricsReport] = []
    for (model, mode), cell_entries in sorted(cells.items()):
        cell_ids = {entry["explanation_id"] for entry in cell_entries}
        resolved = {
            eid: verdicts
            for eid, verdicts in annotation_set.resolved.items()
            if eid in cell_ids
        }
        subset = AnnotationSet(
            annotations=[a for a in annotation_set.annotations if a.explanation_id in cell_ids],
            resolved=resolved,
            disagreements={
                metric: sum(1 for v in resolved.values() if v[metric] is None)
                for metric in ("correctness", "feature_consistency", "factual_consistency")
            },
        )
        if not subset.resolved:
            continue
        try:
            reports.append(
                aggregate_metrics(subset, n=len(cell_ids), model=model, mode=mode)
            )
        except AggregationError as exc:
            raise PipelineError(f"cannot aggregate cell ({model}, {mode}): {exc}") from exc
    if not reports:
        raise PipelineError("no resolved annotations matched the explanation log")

    table = render_metrics_table(reports)
    report_path = config.output_dir / "metrics_report.json"
    report_path.write_text(
        json.dumps([report.to_dict() for report in reports], indent=2), encoding="utf-8"
    )
    (config.output_dir / "metrics_table.txt").write_text(table + "\n", encoding="utf-8")
    return reports, table, report_path


def run_cost(
    config: PipelineConfig,
    ledger_path: Path | None = None,
    queries: int = 1000,
    avg_input: float | None = None,
    avg_output: float | None = None,
) -> dict:
    """Project cost per ``queries`` requests from a ledger or given averages."""
    pricing = pricing_from_config(config.pricing)
    if ledger_path is not None:
        ledger = UsageLedger.from_dict(
            json.loads(Path(ledger_path).read_text(encoding="utf-8"))
        )
        if ledger.results == 0:
            avg_in: Decimal | float = 0
            avg_out: Decimal | float = 0
        else:
            avg_in = Decimal(ledger.prompt_tokens) / ledger.results
            avg_out = Decimal(ledger.completion_tokens) / ledger.results
    elif avg_input is not None and avg_output is not None:
        avg_in, avg_out = avg_input, avg_output
    else:
        raise PipelineError("cost needs a ledger file or explicit token averages")
    amount = estimate_cost(queries, avg_in, avg_out, pricing)
    return {
        "queries": queries,
        "avg_input_tokens": float(avg_in),
        "avg_output_tokens": float(avg_out),
        "input_per_million": str(pricing.input_price),
        "output_per_million": str(pricing.output_price),
        "cost": str(amount),
    }
