"""Deterministic construction of basic and augmented explanation prompts.

A basic prompt is the instruction text followed by the rendered flow. An
augmented prompt starts with the byte-identical basic prompt and appends
three titled knowledge sections. Budget enforcement trims the least
essential content first and never touches the instruction, the flow block
or availability markers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Callable

from .catalog import UNIT_LABELS, FeatureCatalog, FeatureSpec
from .enrichment import (
    EnrichmentContext,
    IpKnowledge,
    drop_oldest_history,
    drop_protocol_descriptions,
    drop_spec_entry,
)
from .flows import FlowRecord, render_flow_text

MODE_BASIC = "basic"
MODE_AUGMENTED = "augmented"

BASIC_SLOTS = ("flow",)
AUGMENTED_SLOTS = ("spec", "protocols", "ip_knowledge")

SECTION_INSTRUCTION = "instruction"
SECTION_FLOW = "flow"
SECTION_SPEC = "netflow_spec"
SECTION_PROTOCOLS = "protocol_knowledge"
SECTION_IP = "ip_knowledge"

#: Average characters per token used by the default counting heuristic.
HEURISTIC_CHARS_PER_TOKEN = 2.7

Tokenizer = Callable[[str], int]

_PLACEHOLDER = re.compile(r"\{\{([a-zA-Z_][a-zA-Z0-9_]*)\}\}")


class TemplateError(ValueError):
    """Raised when a prompt template does not match its expected slots."""


class BudgetInfeasibleError(RuntimeError):
    """Raised when even the untrimmable prompt core exceeds the budget."""

    def __init__(self, token_count: int, budget: int):
        super().__init__(
            f"prompt core needs {token_count} tokens but the budget is {budget}"
        )
        self.token_count = token_count
        self.budget = budget


@dataclass(frozen=True)
class PromptTemplate:
    """A template file's text plus its validated placeholder layout."""

    template_id: str
    text: str
    slots: tuple[str, ...]
    pieces: tuple[str, ...]  # literal text around the placeholders; len(slots) + 1


def parse_template(
    text: str, template_id: str, expected_slots: tuple[str, ...]
) -> PromptTemplate:
    """Validate placeholder names, multiplicity and order.

    The template must contain each expected placeholder exactly once, in
    order, and nothing else in double braces. Trailing whitespace after
    the final placeholder is dropped so the last substituted block ends
    the prompt.
    """
    found = [(m.group(1), m.start(), m.end()) for m in _PLACEHOLDER.finditer(text)]
    names = [name for name, _, _ in found]
    for name in names:
        if name not in expected_slots:
            raise TemplateError(
                f"template {template_id!r} uses unknown placeholder {{{{{name}}}}}"
            )
    if names != list(expected_slots):
        raise TemplateError(
            f"template {template_id!r} must contain placeholders "
            f"{expected_slots} exactly once each, in order; found {tuple(names)}"
        )
    pieces: list[str] = []
    cursor = 0
    for _, start, end in found:
        pieces.append(text[cursor:start])
        cursor = end
    pieces.append(text[cursor:].rstrip())
    return PromptTemplate(
        template_id=template_id,
        text=text,
        slots=tuple(names),
        pieces=tuple(pieces),
    )


def load_template(
    source: str | Path, template_id: str, expected_slots: tuple[str, ...]
) -> PromptTemplate:
    return parse_template(
        Path(source).read_text(encoding="utf-8"), template_id, expected_slots
    )


def default_basic_template() -> PromptTemplate:
    text = resources.files("flowexplain").joinpath("data/templates/basic.txt").read_text("utf-8")
    return parse_template(text, "basic-default", BASIC_SLOTS)


def default_augmented_template() -> PromptTemplate:
    text = (
        resources.files("flowexplain").joinpath("data/templates/augmented.txt").read_text("utf-8")
    )
    return parse_template(text, "augmented-default", AUGMENTED_SLOTS)


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Token count of ``text`` under the configured tokenizer.

    The default is a character-ratio heuristic (one token per 2.7
    characters, rounded up) computed in exact integer arithmetic, so the
    count is monotone non-decreasing under concatenation.
    """
    if tokenizer is not None:
        return tokenizer(text)
    if not text:
        return 0
    return (len(text) * 10 + 26) // 27


@dataclass(frozen=True)
class BuildInputs:
    """Everything needed to rebuild a bundle, kept for budget trimming."""

    record: FlowRecord
    catalog: FeatureCatalog
    template: PromptTemplate
    context: EnrichmentContext | None = None
    augmented_template: PromptTemplate | None = None
    tokenizer: Tokenizer | None = None


@dataclass(frozen=True)
class PromptBundle:
    """Final prompt text with its section map and build metadata."""

    text: str
    sections: dict[str, tuple[int, int]]
    token_count: int
    mode: str
    flow_id: str
    metadata: dict[str, object]
    build_inputs: BuildInputs | None = field(default=None, repr=False, compare=False)

    def section_text(self, section_id: str) -> str:
        offset, length = self.sections[section_id]
        return self.text[offset : offset + length]

    def to_record(self) -> dict:
        """Serializable form for audit logs (build inputs excluded)."""
        return {
            "text": self.text,
            "sections": {k: list(v) for k, v in self.sections.items()},
            "token_count": self.token_count,
            "mode": self.mode,
            "flow_id": self.flow_id,
            "metadata": self.metadata,
        }


def _check_tiling(sections: dict[str, tuple[int, int]], total_length: int) -> None:
    spans = sorted(sections.values())
    cursor = 0
    for offset, length in spans:
        if offset != cursor or length < 0:
            raise AssertionError("prompt sections must tile the text exactly")
        cursor = offset + length
    if cursor != total_length:
        raise AssertionError("prompt sections must cover the whole text")


def build_basic_prompt(
    record: FlowRecord,
    catalog: FeatureCatalog,
    template: PromptTemplate,
    tokenizer: Tokenizer | None = None,
) -> PromptBundle:
    """Instruction text followed by the rendered flow block."""
    if template.slots != BASIC_SLOTS:
        raise TemplateError(
            f"basic prompt requires a template with slots {BASIC_SLOTS}, "
            f"got {template.slots}"
        )
    if template.pieces[-1]:
        raise TemplateError(
            "basic template must end with {{flow}} so the flow block is the final section"
        )
    instruction = template.pieces[0]
    flow_block = render_flow_text(record, catalog)
    text = instruction + flow_block
    sections = {
        SECTION_INSTRUCTION: (0, len(instruction)),
        SECTION_FLOW: (len(instruction), len(flow_block)),
    }
    _check_tiling(sections, len(text))
    return PromptBundle(
        text=text,
        sections=sections,
        token_count=count_tokens(text, tokenizer),
        mode=MODE_BASIC,
        flow_id=record.flow_id,
        metadata={
            "catalog_version": catalog.version,
            "template_id": template.template_id,
            "trims": [],
        },
        build_inputs=BuildInputs(record=record, catalog=catalog, template=template,
                                 tokenizer=tokenizer),
    )


def _render_spec_entries(entries: tuple[FeatureSpec, ...]) -> str:
    if not entries:
        return "- (all feature specifications omitted to fit the prompt budget)"
    return "\n".join(
        f"- {spec.name}: {spec.definition} [{UNIT_LABELS[spec.unit]}]" for spec in entries
    )


def _format_l7_code(numeric_id) -> str:
    if isinstance(numeric_id, tuple):
        master, sub = numeric_id
        return f"{master}.{sub}" if sub else str(master)
    return str(numeric_id)


def _render_protocols(context: EnrichmentContext) -> str:
    l4, l7 = context.l4, context.l7
    l4_line = f"- Transport protocol {l4.numeric_id}: {l4.name}"
    if l4.description:
        l4_line += f" ({l4.description})"
    l7_line = f"- Application protocol {_format_l7_code(l7.numeric_id)}: {l7.name}"
    if l7.description:
        l7_line += f" ({l7.description})"
    return l4_line + "\n" + l7_line


def _render_ip_side(title: str, side: IpKnowledge, unavailable: dict[str, str]) -> list[str]:
    lines = [f"{title} {side.ip}:"]
    lines.append(f"- classification: {side.classification}")

    if side.geo is not None:
        geo = side.geo
        parts = []
        if geo.country:
            parts.append(f"country={geo.country}")
        if geo.city:
            parts.append(f"city={geo.city}")
        if geo.asn is not None:
            parts.append(f"asn=AS{geo.asn}")
        if geo.as_name:
            parts.append(f"as_name={geo.as_name}")
        detail = ", ".join(parts) if parts else "no attributes reported"
        lines.append(f"- geolocation: {detail} (source: {geo.provenance})")
    else:
        lines.append(f"- geolocation unavailable: {unavailable.get('geo', 'no provider')}")

    if side.threat is not None:
        threat = side.threat
        categories = ",".join(threat.categories) if threat.categories else "none"
        detail = f"verdict={threat.verdict}, categories={categories}"
        if threat.last_seen:
            detail += f", last_seen={threat.last_seen}"
        lines.append(f"- threat intelligence: {detail} (source: {threat.provenance})")
    else:
        lines.append(
            f"- threat intelligence unavailable: {unavailable.get('cti', 'no provider')}"
        )

    if "history" in unavailable:
        lines.append(f"- recent connections unavailable: {unavailable['history']}")
    elif not side.history and not side.history_trimmed:
        lines.append("- recent connections: none on record")
    else:
        lines.append("- recent connections (most recent first):")
        for i, entry in enumerate(side.history, start=1):
            lines.append(
                f"  {i}. ts={entry.timestamp} {entry.src_ip} -> {entry.dst_ip} "
                f"proto {entry.l4_protocol_id} [{entry.label}] {entry.summary}"
            )
        if side.history_trimmed:
            lines.append(
                f"  ({side.history_trimmed} older entr"
                f"{'y' if side.history_trimmed == 1 else 'ies'} omitted for budget)"
            )
    return lines


def _render_ip_knowledge(context: EnrichmentContext) -> str:
    by_side: dict[str, dict[str, str]] = {"src": {}, "dst": {}}
    for item in context.unavailable:
        component, _, side = item.component.partition(".")
        if side in by_side:
            by_side[side][component] = item.reason
    lines = _render_ip_side("Source IP", context.src, by_side["src"])
    lines += _render_ip_side("Destination IP", context.dst, by_side["dst"])
    return "\n".join(lines)


def build_augmented_prompt(
    record: FlowRecord,
    context: EnrichmentContext,
    catalog: FeatureCatalog,
    basic_template: PromptTemplate,
    augmented_template: PromptTemplate,
    tokenizer: Tokenizer | None = None,
) -> PromptBundle:
    """Basic prompt plus the three titled knowledge sections, in order."""
    if context.flow_id != record.flow_id:
        raise ValueError(
            f"context was built for flow {context.flow_id!r}, not {record.flow_id!r}"
        )
    if augmented_template.slots != AUGMENTED_SLOTS:
        raise TemplateError(
            f"augmented prompt requires a template with slots {AUGMENTED_SLOTS}, "
            f"got {augmented_template.slots}"
        )
    basic = build_basic_prompt(record, catalog, basic_template, tokenizer)

    bodies = {
        "spec": _render_spec_entries(context.spec_entries),
        "protocols": _render_protocols(context),
        "ip_knowledge": _render_ip_knowledge(context),
    }
    pieces = augmented_template.pieces
    separator = "\n\n"
    segments = []
    for i, slot in enumerate(AUGMENTED_SLOTS):
        segments.append(pieces[i] + bodies[slot])
    segments[-1] += pieces[-1]

    text = basic.text + separator + "".join(segments)
    offset = len(basic.text)
    sections = dict(basic.sections)
    section_ids = (SECTION_SPEC, SECTION_PROTOCOLS, SECTION_IP)
    lengths = [len(segments[0]) + len(separator), len(segments[1]), len(segments[2])]
    for section_id, length in zip(section_ids, lengths):
        sections[section_id] = (offset, length)
        offset += length
    _check_tiling(sections, len(text))

    trims = list(context_trims(context))
    return PromptBundle(
        text=text,
        sections=sections,
        token_count=count_tokens(text, tokenizer),
        mode=MODE_AUGMENTED,
        flow_id=record.flow_id,
        metadata={
            "catalog_version": catalog.version,
            "template_id": basic_template.template_id,
            "augmented_template_id": augmented_template.template_id,
            "providers": dict(context.provider_ids),
            "unavailable": [[u.component, u.reason] for u in context.unavailable],
            "trims": trims,
        },
        build_inputs=BuildInputs(
            record=record,
            catalog=catalog,
            template=basic_template,
            context=context,
            augmented_template=augmented_template,
            tokenizer=tokenizer,
        ),
    )


def context_trims(context: EnrichmentContext) -> list[str]:
    """Trim markers already applied to a context (history drops)."""
    trims = []
    total = context.src.history_trimmed + context.dst.history_trimmed
    for _ in range(total):
        trims.append("history_entry")
    return trims


def _zero_valued_features(record: FlowRecord, entries: tuple[FeatureSpec, ...]) -> list[str]:
    names = []
    for spec in entries:
        value = record.values.get(spec.name)
        if isinstance(value, (int, Decimal)) and not isinstance(value, bool) and value == 0:
            names.append(spec.name)
    return names


def enforce_budget(
    bundle: PromptBundle, budget: int, tokenizer: Tokenizer | None = None
) -> PromptBundle:
    """Shrink a bundle to the token budget, or fail if the core cannot fit.

    Trim priority: oldest history entries first, then specification
    entries for zero-valued features, then protocol descriptions. The
    instruction, the flow block and availability markers are never
    removed. Every trim is recorded in the bundle metadata.
    """
    if budget <= 0:
        raise ValueError("token budget must be positive")
    tokenizer = tokenizer or (bundle.build_inputs.tokenizer if bundle.build_inputs else None)
    if bundle.token_count <= budget:
        return bundle
    inputs = bundle.build_inputs
    if inputs is None:
        raise BudgetInfeasibleError(bundle.token_count, budget)
    if bundle.mode == MODE_BASIC or inputs.context is None:
        # nothing trimmable in a basic prompt
        raise BudgetInfeasibleError(bundle.token_count, budget)

    context = inputs.context
    trims: list[str] = list(context_trims(context))

    def rebuild(ctx: EnrichmentContext) -> PromptBundle:
        rebuilt = build_augmented_prompt(
            inputs.record,
            ctx,
            inputs.catalog,
            inputs.template,
            inputs.augmented_template,
            tokenizer,
        )
        merged = dict(rebuilt.metadata)
        merged["trims"] = list(trims)
        return replace(rebuilt, metadata=merged)

    current = bundle
    # 1. history entries, oldest first
    while current.token_count > budget:
        reduced = drop_oldest_history(context)
        if reduced is None:
            break
        context = reduced
        trims.append("history_entry")
        current = rebuild(context)
    # 2. specification entries for zero-valued features
    if current.token_count > budget:
        for name in _zero_valued_features(inputs.record, context.spec_entries):
            context = drop_spec_entry(context, name)
            trims.append(f"spec_entry:{name}")
            current = rebuild(context)
            if current.token_count <= budget:
                break
    # 3. protocol descriptions
    if current.token_count > budget and (context.l4.description or context.l7.description):
        context = drop_protocol_descriptions(context)
        trims.append("protocol_descriptions")
        current = rebuild(context)

    if current.token_count > budget:
        raise BudgetInfeasibleError(current.token_count, budget)
    return current
