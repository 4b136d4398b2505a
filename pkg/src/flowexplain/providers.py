"""Geolocation and threat-intelligence providers.

Every piece of IP knowledge either carries provenance (which provider said
it, and when) or is reported as unavailable; nothing is ever synthesized.
Three implementations are bundled per provider kind: a static fixture file
for offline runs and tests, a generic HTTPS endpoint with a templated
request, and a disabled placeholder.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import requests

CTI_VERDICTS = ("malicious", "suspicious", "unknown", "benign")

#: Closed set of reasons a knowledge component can be unavailable for.
UNAVAILABLE_REASONS = (
    "non-public",
    "no provider",
    "timeout",
    "provider_error",
    "not_found",
    "auth_error",
    "no store",
)


class ProviderError(RuntimeError):
    """Lookup failed; mapped to an unavailability reason, never a fabrication."""

    reason = "provider_error"


class ProviderTimeout(ProviderError):
    reason = "timeout"


class ProviderNotFound(ProviderError):
    reason = "not_found"


class ProviderAuthError(ProviderError):
    """Authentication or configuration problem, distinct from a miss."""

    reason = "auth_error"


class NonPublicAddressError(ValueError):
    """Caller error: providers must only be asked about public addresses."""


@dataclass(frozen=True)
class Provenance:
    provider_id: str
    retrieved_at: str  # ISO-8601

    def __str__(self) -> str:
        return f"{self.provider_id}@{self.retrieved_at}"


@dataclass(frozen=True)
class GeoInfo:
    ip: str
    country: str | None
    city: str | None
    asn: int | None
    as_name: str | None
    provenance: Provenance

    def to_dict(self) -> dict:
        return {
            "ip": self.ip,
            "country": self.country,
            "city": self.city,
            "asn": self.asn,
            "as_name": self.as_name,
            "provider_id": self.provenance.provider_id,
            "retrieved_at": self.provenance.retrieved_at,
        }


@dataclass(frozen=True)
class ThreatIntel:
    ip: str
    verdict: str
    categories: tuple[str, ...]
    last_seen: str | None
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.verdict not in CTI_VERDICTS:
            raise ValueError(f"verdict must be one of {CTI_VERDICTS}, got {self.verdict!r}")

    def to_dict(self) -> dict:
        return {
            "ip": self.ip,
            "verdict": self.verdict,
            "categories": list(self.categories),
            "last_seen": self.last_seen,
            "provider_id": self.provenance.provider_id,
            "retrieved_at": self.provenance.retrieved_at,
        }


class GeolocationProvider(Protocol):
    provider_id: str

    def lookup(self, ip: str) -> GeoInfo: ...


class ThreatIntelProvider(Protocol):
    provider_id: str

    def lookup(self, ip: str) -> ThreatIntel: ...


class DisabledProvider:
    """Placeholder for an intentionally unconfigured provider.

    Never called by the enrichment layer; its presence simply means
    "no provider" for the availability report.
    """

    def __init__(self, provider_id: str = "disabled"):
        self.provider_id = provider_id

    def lookup(self, ip: str) -> Any:
        raise ProviderError("provider disabled")


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


_EPOCH = "1970-01-01T00:00:00Z"


class FixtureGeoProvider:
    """Geolocation answers from a static JSONL file keyed by address.

    Each line: ``{"ip": ..., "country": ..., "city": ..., "asn": ...,
    "as_name": ..., "retrieved_at": ...}``. Misses raise not-found. The
    ``calls`` counter exists so tests can assert how often the provider
    was consulted.
    """

    def __init__(self, source: str | Path | Mapping[str, dict], provider_id: str = "fixture-geo"):
        self.provider_id = provider_id
        self.calls = 0
        if isinstance(source, (str, Path)):
            self._table = {row["ip"]: row for row in _read_jsonl(source)}
        else:
            self._table = {ip: dict(row, ip=ip) for ip, row in source.items()}

    def lookup(self, ip: str) -> GeoInfo:
        self.calls += 1
        row = self._table.get(ip)
        if row is None:
            raise ProviderNotFound(f"{self.provider_id} has no record for {ip}")
        if row.get("simulate") == "timeout":
            raise ProviderTimeout(f"{self.provider_id} timed out for {ip}")
        if row.get("simulate") == "error":
            raise ProviderError(f"{self.provider_id} failed for {ip}")
        return GeoInfo(
            ip=ip,
            country=row.get("country"),
            city=row.get("city"),
            asn=row.get("asn"),
            as_name=row.get("as_name"),
            provenance=Provenance(self.provider_id, row.get("retrieved_at", _EPOCH)),
        )


class FixtureThreatProvider:
    """Threat-intelligence answers from a static JSONL feed.

    Addresses absent from the feed get an ``unknown`` verdict (a valid
    answer, not a failure), mirroring how reputation feeds behave.
    """

    def __init__(self, source: str | Path | Mapping[str, dict], provider_id: str = "fixture-cti"):
        self.provider_id = provider_id
        self.calls = 0
        if isinstance(source, (str, Path)):
            self._table = {row["ip"]: row for row in _read_jsonl(source)}
        else:
            self._table = {ip: dict(row, ip=ip) for ip, row in source.items()}

    def lookup(self, ip: str) -> ThreatIntel:
        self.calls += 1
        row = self._table.get(ip)
        if row is None:
            return ThreatIntel(
                ip=ip,
                verdict="unknown",
                categories=(),
                last_seen=None,
                provenance=Provenance(self.provider_id, _EPOCH),
            )
        if row.get("simulate") == "timeout":
            raise ProviderTimeout(f"{self.provider_id} timed out for {ip}")
        if row.get("simulate") == "error":
            raise ProviderError(f"{self.provider_id} failed for {ip}")
        verdict = row.get("verdict", "unknown")
        if verdict not in CTI_VERDICTS:
            raise ProviderError(f"{self.provider_id} returned malformed verdict {verdict!r}")
        return ThreatIntel(
            ip=ip,
            verdict=verdict,
            categories=tuple(row.get("categories", ())),
            last_seen=row.get("last_seen"),
            provenance=Provenance(self.provider_id, row.get("retrieved_at", _EPOCH)),
        )


def _dig(payload: Any, dotted_path: str) -> Any:
    """Walk a dotted path ("a.b.0.c") through nested dicts and lists."""
    node = payload
    for part in dotted_path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(dotted_path)
    return node


@dataclass(frozen=True)
class HTTPProviderProfile:
    """How to talk to a generic HTTPS knowledge endpoint.

    ``url_template`` contains ``{ip}``; the auth token (if any) is read
    from the environment variable named by ``auth_env`` and sent as a
    bearer token. ``field_paths`` maps logical fields to dotted paths in
    the JSON response.
    """

    provider_id: str
    url_template: str
    field_paths: Mapping[str, str]
    auth_env: str | None = None
    timeout_ms: int = 5000
    extra_headers: Mapping[str, str] | None = None


class _HTTPProviderBase:
    def __init__(self, profile: HTTPProviderProfile, session: requests.Session | None = None):
        self.profile = profile
        self.provider_id = profile.provider_id
        self.calls = 0
        self._session = session or requests.Session()

    def _fetch(self, ip: str) -> Any:
        self.calls += 1
        headers = dict(self.profile.extra_headers or {})
        if self.profile.auth_env:
            token = os.environ.get(self.profile.auth_env)
            if not token:
                raise ProviderAuthError(
                    f"environment variable {self.profile.auth_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        url = self.profile.url_template.format(ip=ip)
        try:
            response = self._session.get(
                url, headers=headers, timeout=self.profile.timeout_ms / 1000.0
            )
        except requests.Timeout as exc:
            raise ProviderTimeout(f"{self.provider_id} timed out for {ip}") from exc
        except requests.RequestException as exc:
            raise ProviderError(f"{self.provider_id} request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise ProviderAuthError(f"{self.provider_id} rejected credentials")
        if response.status_code == 404:
            raise ProviderNotFound(f"{self.provider_id} has no record for {ip}")
        if response.status_code >= 400:
            raise ProviderError(f"{self.provider_id} returned HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise ProviderError(f"{self.provider_id} returned a malformed payload") from exc

    def _extract(self, payload: Any, field: str, required: bool = False) -> Any:
        path = self.profile.field_paths.get(field)
        if path is None:
            if required:
                raise ProviderError(f"{self.provider_id} profile lacks a path for {field!r}")
            return None
        try:
            return _dig(payload, path)
        except (KeyError, IndexError, ValueError, TypeError):
            if required:
                raise ProviderError(
                    f"{self.provider_id} payload missing field {field!r} at {path!r}"
                ) from None
            return None

    @staticmethod
    def _now() -> str:
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class HTTPGeoProvider(_HTTPProviderBase):
    """Generic HTTPS geolocation client with configurable response paths."""

    def lookup(self, ip: str) -> GeoInfo:
        payload = self._fetch(ip)
        asn = self._extract(payload, "asn")
        return GeoInfo(
            ip=ip,
            country=self._extract(payload, "country"),
            city=self._extract(payload, "city"),
            asn=int(asn) if asn is not None else None,
            as_name=self._extract(payload, "as_name"),
            provenance=Provenance(self.provider_id, self._now()),
        )


class HTTPThreatProvider(_HTTPProviderBase):
    """Generic HTTPS threat-intelligence client."""

    def lookup(self, ip: str) -> ThreatIntel:
        payload = self._fetch(ip)
        verdict = self._extract(payload, "verdict", required=True)
        if not isinstance(verdict, str) or verdict.lower() not in CTI_VERDICTS:
            raise ProviderError(f"{self.provider_id} returned malformed verdict {verdict!r}")
        categories = self._extract(payload, "categories") or ()
        if isinstance(categories, str):
            categories = (categories,)
        return ThreatIntel(
            ip=ip,
            verdict=verdict.lower(),
            categories=tuple(str(c) for c in categories),
            last_seen=self._extract(payload, "last_seen"),
            provenance=Provenance(self.provider_id, self._now()),
        )


class TTLCache:
    """Thread-safe TTL cache keyed by (provider id, ip); last writer wins."""

    def __init__(self, ttl_seconds: float = 86400.0, clock: Callable[[], float] = time.monotonic):
        self.ttl_seconds = ttl_seconds
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], tuple[float, Any]] = {}

    def get(self, provider_id: str, ip: str) -> Any | None:
        key = (provider_id, ip)
        with self._lock:
            hit = self._entries.get(key)
            if hit is None:
                return None
            expires_at, value = hit
            if self._clock() >= expires_at:
                del self._entries[key]
                return None
            return value

    def put(self, provider_id: str, ip: str, value: Any) -> None:
        with self._lock:
            self._entries[(provider_id, ip)] = (self._clock() + self.ttl_seconds, value)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
