"""Historical IP-to-ASN/country enrichment and host-level aggregation.

Mapping tables are dated snapshots of prefix-to-value rows.  A lookup picks
the snapshot closest in time to the report (ties resolve to the earlier
snapshot: the mapping already in force is the safer historical claim) and
then the longest matching prefix inside it.
"""

from __future__ import annotations

import csv
import enum
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable

from .ingest import Report, ReportStore, _gc_paused, format_ipv4, parse_ipv4


class Level(enum.Enum):
    """Aggregation identity of a host: single address, AS, or country."""

    IP = "ip"
    ASN = "asn"
    CC = "cc"

    @classmethod
    def parse(cls, text: str) -> "Level":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown level {text!r} (expected ip, asn or cc)") from None


@dataclass(frozen=True, slots=True)
class HostKey:
    """One host at one aggregation level.

    ``value`` is a dotted quad for IP, a positive integer for ASN, a 2-letter
    code for CC, or ``None`` for the reserved unknown bucket that downstream
    metrics exclude.
    """

    level: Level
    value: str | int | None

    @property
    def is_unknown(self) -> bool:
        return self.value is None

    def label(self) -> str:
        return "unknown" if self.value is None else str(self.value)


def parse_prefix(text: str) -> tuple[int, int]:
    """Parse ``a.b.c.d/len`` to (network int, prefix length); bare IP means /32."""
    if "/" in text:
        addr, _, length_text = text.partition("/")
        try:
            length = int(length_text)
        except ValueError:
            raise ValueError(f"invalid prefix length in {text!r}") from None
        if not 0 <= length <= 32:
            raise ValueError(f"prefix length out of range in {text!r}")
    else:
        addr, length = text, 32
    network = parse_ipv4(addr)
    mask = 0 if length == 0 else (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF
    return network & mask, length


class _Snapshot:
    """Prefix table for one date; buckets per prefix length, longest first."""

    __slots__ = ("_buckets",)

    def __init__(self, entries: Iterable[tuple[int, int, object]]):
        per_len: dict[int, dict[int, object]] = {}
        for network, length, value in entries:
            per_len.setdefault(length, {})[network] = value
        self._buckets = tuple(
            (length, 0 if length == 0 else (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF,
             table)
            for length, table in sorted(per_len.items(), reverse=True)
        )

    def lookup(self, ip: int) -> object | None:
        for _length, mask, table in self._buckets:
            value = table.get(ip & mask)
            if value is not None:
                return value
        return None


@dataclass(frozen=True)
class SnapshotTable:
    """Dated prefix snapshots supporting time-aware longest-prefix lookups."""

    dates: tuple[int, ...]
    _snapshots: tuple[_Snapshot, ...]

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, str, object]]) -> "SnapshotTable":
        """Build from (snapshot_date, prefix, value) rows."""
        grouped: dict[int, list[tuple[int, int, object]]] = {}
        for date, prefix, value in entries:
            network, length = parse_prefix(prefix)
            grouped.setdefault(int(date), []).append((network, length, value))
        if not grouped:
            raise ValueError("snapshot table has no entries")
        dates = tuple(sorted(grouped))
        snapshots = tuple(_Snapshot(grouped[d]) for d in dates)
        return cls(dates=dates, _snapshots=snapshots)

    def snapshot_for(self, ts: int) -> _Snapshot:
        """Snapshot nearest in time to ``ts``; equidistant picks the earlier."""
        dates = self.dates
        i = bisect_right(dates, ts)
        if i == 0:
            return self._snapshots[0]
        if i == len(dates):
            return self._snapshots[-1]
        before, after = dates[i - 1], dates[i]
        if ts - before <= after - ts:
            return self._snapshots[i - 1]
        return self._snapshots[i]

    def lookup(self, ip: int, ts: int) -> object | None:
        return self.snapshot_for(ts).lookup(ip)


def map_ip(table: SnapshotTable, ip: int, ts: int) -> object | None:
    """Nearest-dated snapshot, then longest-prefix match; None if uncovered."""
    return table.lookup(ip, ts)


def load_snapshot_table(path: str, value_kind: str = "str") -> SnapshotTable:
    """Load a ``snapshot_date,prefix,value`` CSV (header row optional).

    ``value_kind`` is ``"asn"`` (values parsed as positive integers),
    ``"cc"`` (upper-cased 2-letter codes) or ``"str"``.
    """
    def convert(raw: str) -> object:
        raw = raw.strip()
        if value_kind == "asn":
            if raw.upper().startswith("AS"):
                raw = raw[2:]
            asn = int(raw)
            if asn <= 0:
                raise ValueError(f"AS number must be positive: {raw!r}")
            return asn
        if value_kind == "cc":
            code = raw.upper()
            if len(code) != 2 or not code.isalpha():
                raise ValueError(f"not a 2-letter country code: {raw!r}")
            return code
        return raw

    entries: list[tuple[int, str, object]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line_no == 1 and row[0].strip().lower() == "snapshot_date":
                continue
            if len(row) != 3:
                raise ValueError(f"{path}, line {line_no}: expected 3 fields, got {len(row)}")
            try:
                entries.append((int(row[0]), row[1].strip(), convert(row[2])))
            except ValueError as exc:
                raise ValueError(f"{path}, line {line_no}: {exc}") from None
    return SnapshotTable.from_entries(entries)


def enrich_report(r: Report, asn_table: SnapshotTable | None,
                  geo_table: SnapshotTable | None) -> Report:
    """Fill absent asn/country from the tables; feed-provided values win."""
    asn, country = r.asn, r.country
    if asn is None and asn_table is not None:
        asn = asn_table.lookup(r.ip, r.timestamp)  # type: ignore[assignment]
    if country is None and geo_table is not None:
        country = geo_table.lookup(r.ip, r.timestamp)  # type: ignore[assignment]
    if asn is r.asn and country is r.country:
        return r
    return r._replace(asn=asn, country=country)


def enrich_store(store: ReportStore, asn_table: SnapshotTable | None = None,
                 geo_table: SnapshotTable | None = None) -> ReportStore:
    """Return a store with asn/country filled from the snapshot tables.

    Report order is preserved (enrichment never touches sort-key fields), so
    the result is still a valid store.  Reports covered by no prefix keep
    absent fields and surface under the unknown bucket when aggregated.
    """
    reports = tuple(enrich_report(r, asn_table, geo_table) for r in store.reports)
    return ReportStore(reports=reports, t_min=store.t_min, t_max=store.t_max,
                       skipped_rows=store.skipped_rows)


def _raw_key(r: Report, level: Level):
    if level is Level.IP:
        return r.ip
    if level is Level.ASN:
        return r.asn
    return r.country


def host_key(level: Level, raw: str | int | None) -> HostKey:
    if raw is None:
        return HostKey(level, None)
    if level is Level.IP:
        return HostKey(level, format_ipv4(raw))  # type: ignore[arg-type]
    return HostKey(level, raw)


def aggregate(store: ReportStore | Iterable[Report], level: Level) -> dict[HostKey, list[Report]]:
    """Partition reports by host at the requested level.

    Reports unmapped at that level land under ``HostKey(level, None)``; that
    reserved bucket is excluded from every downstream metric.
    """
    groups: dict[object, list[Report]] = {}
    with _gc_paused():
        if level is Level.IP:
            # hot path: multi-million-report stores group per address
            for r in store:
                bucket = groups.get(r.ip)
                if bucket is None:
                    groups[r.ip] = [r]
                else:
                    bucket.append(r)
        else:
            for r in store:
                groups.setdefault(_raw_key(r, level), []).append(r)
    return {host_key(level, raw): reports for raw, reports in groups.items()}


def mapped_groups(store: ReportStore | Iterable[Report], level: Level) -> dict[HostKey, list[Report]]:
    """Like :func:`aggregate` but with the unknown bucket dropped."""
    return {k: v for k, v in aggregate(store, level).items() if not k.is_unknown}
