"""Feature-specification catalog for NetFlow records.

The catalog is the single source of truth for feature names, definitions,
units and value kinds. It drives dataset parsing, flow rendering, the
specification section of augmented prompts, and the consistency checkers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterator

UNITS = frozenset(
    {
        "bytes",
        "bits-per-second",
        "milliseconds",
        "count",
        "port",
        "address",
        "protocol-id",
        "flag-bitmask",
        "dimensionless",
    }
)

VALUE_KINDS = frozenset({"integer", "decimal", "address", "string"})

#: Unit tags whose numeric values must be non-negative.
NON_NEGATIVE_UNITS = frozenset({"bytes", "count", "milliseconds"})

#: Human-readable unit labels used when the catalog is rendered into a prompt.
UNIT_LABELS = {
    "bytes": "bytes",
    "bits-per-second": "bits per second",
    "milliseconds": "milliseconds",
    "count": "count",
    "port": "port number",
    "address": "IP address",
    "protocol-id": "protocol identifier",
    "flag-bitmask": "flag bitmask",
    "dimensionless": "dimensionless",
}

DEFAULT_CATALOG_RESOURCE = "nfv2_catalog.json"


class CatalogError(ValueError):
    """Raised when a catalog document is malformed or violates its invariants."""


@dataclass(frozen=True)
class FeatureSpec:
    """Name, definition, unit and value kind of one flow feature."""

    name: str
    definition: str
    unit: str
    value_kind: str

    def __post_init__(self) -> None:
        if not self.name:
            raise CatalogError("feature name must be non-empty")
        if self.unit not in UNITS:
            raise CatalogError(f"unknown unit tag {self.unit!r} for feature {self.name}")
        if self.value_kind not in VALUE_KINDS:
            raise CatalogError(
                f"unknown value kind {self.value_kind!r} for feature {self.name}"
            )


@dataclass(frozen=True)
class FeatureCatalog:
    """Versioned, ordered feature schema.

    Feature order is fixed and equals the dataset column order. Lookup by
    name is total over the listed features.
    """

    version: str
    features: tuple[FeatureSpec, ...]
    label_column: str
    attack_column: str
    _by_name: dict[str, FeatureSpec] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        if not self.version:
            raise CatalogError("catalog version must be present")
        if not self.features:
            raise CatalogError("empty catalog: at least one feature is required")
        by_name: dict[str, FeatureSpec] = {}
        for spec in self.features:
            if spec.name in by_name:
                raise CatalogError(f"duplicate feature name {spec.name!r}")
            by_name[spec.name] = spec
        object.__setattr__(self, "_by_name", by_name)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self) -> Iterator[FeatureSpec]:
        return iter(self.features)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.features)

    def get(self, name: str) -> FeatureSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise CatalogError(f"feature {name!r} is not in catalog {self.version}") from None


def load_catalog(source: str | Path | dict) -> FeatureCatalog:
    """Load a catalog from a JSON document (path or already-parsed mapping).

    Rejects documents with a missing version, an empty feature list,
    duplicate feature names, or unknown unit / value-kind tags.
    """
    if isinstance(source, (str, Path)):
        try:
            document = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CatalogError(f"malformed catalog document {source}: {exc}") from exc
    else:
        document = source
    if not isinstance(document, dict):
        raise CatalogError("catalog document must be a JSON object")

    try:
        version = document["version"]
        raw_features = document["features"]
    except KeyError as exc:
        raise CatalogError(f"catalog document missing required key {exc}") from exc
    label_column = document.get("label_column", "Label")
    attack_column = document.get("attack_column", "Attack")

    if not isinstance(raw_features, list) or not raw_features:
        raise CatalogError("empty catalog: 'features' must be a non-empty list")
    features = []
    for entry in raw_features:
        try:
            features.append(
                FeatureSpec(
                    name=entry["name"],
                    definition=entry["definition"],
                    unit=entry["unit"],
                    value_kind=entry["value_kind"],
                )
            )
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed feature entry {entry!r}: {exc}") from exc
    return FeatureCatalog(
        version=version,
        features=tuple(features),
        label_column=label_column,
        attack_column=attack_column,
    )


@lru_cache(maxsize=1)
def default_catalog() -> FeatureCatalog:
    """The packaged 43-feature NetFlow-v2 catalog."""
    resource = resources.files("flowexplain").joinpath(f"data/{DEFAULT_CATALOG_RESOURCE}")
    return load_catalog(json.loads(resource.read_text(encoding="utf-8")))
