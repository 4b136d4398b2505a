"""Per-IP connection history store.

An embedded, append-only SQLite log with per-IP indexes. Entries are never
updated or deduplicated; queries answer "last K connections involving this
address" for the prompt augmenter.
"""

from __future__ import annotations

import ipaddress
import json
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

HISTORY_LABELS = ("benign", "malicious", "unlabeled")


class StoreError(RuntimeError):
    """Raised when the persistent store itself fails."""


@dataclass(frozen=True)
class FlowHistoryEntry:
    """One observed flow, indexed by both of its endpoint addresses."""

    flow_id: str
    timestamp: int
    src_ip: str
    dst_ip: str
    l4_protocol_id: int
    label: str
    summary: str

    def __post_init__(self) -> None:
        if self.timestamp is None:
            raise ValueError("history entry requires a timestamp")
        for field_name, ip in (("src_ip", self.src_ip), ("dst_ip", self.dst_ip)):
            try:
                ipaddress.ip_address(ip)
            except ValueError:
                raise ValueError(f"{field_name} is not a valid address: {ip!r}") from None
        if not 0 <= self.l4_protocol_id <= 255:
            raise ValueError(f"l4_protocol_id out of range: {self.l4_protocol_id}")
        if self.label not in HISTORY_LABELS:
            raise ValueError(f"label must be one of {HISTORY_LABELS}, got {self.label!r}")

    def to_dict(self) -> dict:
        return {
            "flow_id": self.flow_id,
            "timestamp": self.timestamp,
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "l4_protocol_id": self.l4_protocol_id,
            "label": self.label,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlowHistoryEntry":
        return cls(
            flow_id=data["flow_id"],
            timestamp=int(data["timestamp"]),
            src_ip=data["src_ip"],
            dst_ip=data["dst_ip"],
            l4_protocol_id=int(data["l4_protocol_id"]),
            label=data["label"],
            summary=data.get("summary", ""),
        )


@dataclass(frozen=True)
class HistoryQuery:
    """Ask for the most recent ``k`` connections of one address."""

    ip: str
    k: int
    before: int | None = None

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("k must be non-negative")


@dataclass(frozen=True)
class IpStats:
    total: int
    malicious: int
    first_seen: int | None
    last_seen: int | None


_SCHEMA = """
CREATE TABLE IF NOT EXISTS flow_history (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    flow_id TEXT NOT NULL,
    timestamp INTEGER NOT NULL,
    src_ip TEXT NOT NULL,
    dst_ip TEXT NOT NULL,
    l4_protocol_id INTEGER NOT NULL,
    label TEXT NOT NULL,
    summary TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_history_src ON flow_history (src_ip, timestamp);
CREATE INDEX IF NOT EXISTS idx_history_dst ON flow_history (dst_ip, timestamp);
"""


class FlowHistoryStore:
    """Append-only flow log, queryable by endpoint address.

    A single writer is serialized through an internal lock; readers see a
    consistent snapshot (appends are atomic transactions). ``max_entries``
    optionally caps the log, evicting oldest rows.
    """

    def __init__(self, path: str | Path = ":memory:", max_entries: int | None = None):
        self.path = str(path)
        self.max_entries = max_entries
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
            self._conn.executescript(_SCHEMA)
            self._conn.commit()
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open history store at {self.path}: {exc}") from exc

    def __enter__(self) -> "FlowHistoryStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def append(self, entry: FlowHistoryEntry) -> int:
        """Persist one entry; returns its insertion id."""
        with self._lock:
            try:
                cur = self._conn.execute(
                    "INSERT INTO flow_history "
                    "(flow_id, timestamp, src_ip, dst_ip, l4_protocol_id, label, summary) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (
                        entry.flow_id,
                        entry.timestamp,
                        entry.src_ip,
                        entry.dst_ip,
                        entry.l4_protocol_id,
                        entry.label,
                        entry.summary,
                    ),
                )
                self._enforce_cap()
                self._conn.commit()
                return int(cur.lastrowid)
            except sqlite3.Error as exc:
                raise StoreError(f"append failed: {exc}") from exc

    def append_many(self, entries: Iterable[FlowHistoryEntry]) -> int:
        """Bulk append; returns the number of entries written."""
        rows = [
            (e.flow_id, e.timestamp, e.src_ip, e.dst_ip, e.l4_protocol_id, e.label, e.summary)
            for e in entries
        ]
        with self._lock:
            try:
                self._conn.executemany(
                    "INSERT INTO flow_history "
                    "(flow_id, timestamp, src_ip, dst_ip, l4_protocol_id, label, summary) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?)",
                    rows,
                )
                self._enforce_cap()
                self._conn.commit()
            except sqlite3.Error as exc:
                raise StoreError(f"bulk append failed: {exc}") from exc
        return len(rows)

    def _enforce_cap(self) -> None:
        if self.max_entries is None:
            return
        (count,) = self._conn.execute("SELECT COUNT(*) FROM flow_history").fetchone()
        excess = count - self.max_entries
        if excess > 0:
            self._conn.execute(
                "DELETE FROM flow_history WHERE id IN "
                "(SELECT id FROM flow_history ORDER BY id LIMIT ?)",
                (excess,),
            )

    def query_history(
        self, query: HistoryQuery, labels: Iterable[str] | None = None
    ) -> list[FlowHistoryEntry]:
        """Most recent entries touching ``query.ip``, newest first.

        Ties on timestamp are broken by reverse insertion order. ``labels``
        optionally restricts the result to entries with those labels.
        """
        sql = (
            "SELECT flow_id, timestamp, src_ip, dst_ip, l4_protocol_id, label, summary "
            "FROM flow_history WHERE (src_ip = ? OR dst_ip = ?)"
        )
        params: list[object] = [query.ip, query.ip]
        if query.before is not None:
            sql += " AND timestamp < ?"
            params.append(query.before)
        if labels is not None:
            wanted = sorted(set(labels))
            sql += " AND label IN (%s)" % ",".join("?" for _ in wanted)
            params.extend(wanted)
        sql += " ORDER BY timestamp DESC, id DESC LIMIT ?"
        params.append(query.k)
        with self._lock:
            try:
                rows = self._conn.execute(sql, params).fetchall()
            except sqlite3.Error as exc:
                raise StoreError(f"query failed: {exc}") from exc
        return [
            FlowHistoryEntry(
                flow_id=r[0],
                timestamp=r[1],
                src_ip=r[2],
                dst_ip=r[3],
                l4_protocol_id=r[4],
                label=r[5],
                summary=r[6],
            )
            for r in rows
        ]

    def ip_stats(self, ip: str) -> IpStats:
        """Counts and first/last timestamps for one address."""
        with self._lock:
            try:
                total, malicious, first_seen, last_seen = self._conn.execute(
                    "SELECT COUNT(*), "
                    "COALESCE(SUM(CASE WHEN label = 'malicious' THEN 1 ELSE 0 END), 0), "
                    "MIN(timestamp), MAX(timestamp) "
                    "FROM flow_history WHERE src_ip = ? OR dst_ip = ?",
                    (ip, ip),
                ).fetchone()
            except sqlite3.Error as exc:
                raise StoreError(f"stats query failed: {exc}") from exc
        return IpStats(
            total=int(total),
            malicious=int(malicious),
            first_seen=first_seen,
            last_seen=last_seen,
        )

    def count(self) -> int:
        with self._lock:
            (n,) = self._conn.execute("SELECT COUNT(*) FROM flow_history").fetchone()
        return int(n)

    def clear(self) -> None:
        """Drop all entries (used when re-bootstrapping from a dataset)."""
        with self._lock:
            try:
                self._conn.execute("DELETE FROM flow_history")
                self._conn.commit()
            except sqlite3.Error as exc:
                raise StoreError(f"clear failed: {exc}") from exc

    def export_jsonl(self, path: str | Path) -> int:
        """Dump all entries, in insertion order, as line-delimited JSON."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT flow_id, timestamp, src_ip, dst_ip, l4_protocol_id, label, summary "
                "FROM flow_history ORDER BY id"
            ).fetchall()
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(
                    json.dumps(
                        {
                            "flow_id": r[0],
                            "timestamp": r[1],
                            "src_ip": r[2],
                            "dst_ip": r[3],
                            "l4_protocol_id": r[4],
                            "label": r[5],
                            "summary": r[6],
                        }
                    )
                    + "\n"
                )
        return len(rows)

    def import_jsonl(self, path: str | Path) -> int:
        """Append entries from a line-delimited JSON export."""
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(FlowHistoryEntry.from_dict(json.loads(line)))
        return self.append_many(entries)
