"""Feed ingestion: parse blacklist report files, normalize and deduplicate.

The canonical interchange format is CSV with a header row naming any subset
of the columns in :data:`CANONICAL_COLUMNS`; a JSON-lines reader accepts the
same field names.  Timestamps may be Unix seconds or ISO-8601 and are
normalized to Unix seconds UTC.  Only IPv4 actors are accepted.
"""

from __future__ import annotations

import contextlib
import csv
import enum
import gc
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Iterator, NamedTuple, Optional, Sequence, TextIO


@contextlib.contextmanager
def _gc_paused():
    """Pause the cycle collector across bulk record construction.

    Multi-million-row loads allocate only acyclic tuples and containers, but
    each collector pass rescans everything already live; pausing it there is
    a large constant-factor win with no semantic effect.
    """
    if not gc.isenabled():
        yield
        return
    gc.disable()
    try:
        yield
    finally:
        gc.enable()


class ActivityClass(enum.Enum):
    """The closed six-class taxonomy of reported malicious activity.

    Declaration order is the fixed tie-break order used by the labeler.
    """

    MALWARE = "malware"
    PHISHING = "phishing"
    FRAUDULENT_SERVICES = "fraudulent_services"
    SPAMMERS = "spammers"
    EXPLOITS = "exploits"
    PUP = "pup"

    @classmethod
    def from_label(cls, label: str) -> "ActivityClass":
        try:
            return cls(label.strip().lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown activity label {label!r} (expected one of: {valid})") from None

    @property
    def label(self) -> str:
        return self.value


class Report(NamedTuple):
    """One timestamped mal-activity observation.

    ``ip`` is the IPv4 address as a 32-bit integer (see :func:`parse_ipv4`).
    Optional fields are ``None`` when absent; an empty CSV field means absent.
    """

    timestamp: int
    ip: int
    url: Optional[str] = None
    activity: Optional[ActivityClass] = None
    source: str = ""
    av_positives: Optional[int] = None
    av_total: Optional[int] = None
    asn: Optional[int] = None
    country: Optional[str] = None
    organization: Optional[str] = None


CANONICAL_COLUMNS = (
    "timestamp",
    "ip",
    "url",
    "activity",
    "source",
    "av_positives",
    "av_total",
    "asn",
    "country",
    "organization",
)


class ParseError(ValueError):
    """A malformed record, carrying file/line/field context when known."""

    def __init__(self, message: str, *, field: str | None = None,
                 line_no: int | None = None, path: str | None = None):
        self.field = field
        self.line_no = line_no
        self.path = path
        super().__init__(message)

    def __str__(self) -> str:
        where = []
        if self.path is not None:
            where.append(self.path)
        if self.line_no is not None:
            where.append(f"line {self.line_no}")
        if self.field is not None:
            where.append(f"field {self.field!r}")
        prefix = ", ".join(where)
        base = super().__str__()
        return f"{prefix}: {base}" if prefix else base

    def with_context(self, *, path: str | None = None, line_no: int | None = None) -> "ParseError":
        err = ParseError(super().__str__(), field=self.field,
                         line_no=self.line_no if line_no is None else line_no,
                         path=self.path if path is None else path)
        return err


@dataclass(frozen=True)
class FormatSpec:
    """Declared shape of an input file.

    ``columns`` maps positional CSV fields to canonical names; ``None`` means
    the first row of the file is a header declaring them.  JSON-lines files
    carry their own field names, so ``columns`` is ignored there.
    """

    kind: str = "csv"  # "csv" | "jsonl"
    columns: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("csv", "jsonl"):
            raise ValueError(f"unknown format kind {self.kind!r}")
        if self.columns is not None:
            _check_columns(self.columns)


def _check_columns(columns: Sequence[str]) -> tuple[str, ...]:
    cols = tuple(c.strip() for c in columns)
    unknown = [c for c in cols if c not in CANONICAL_COLUMNS]
    if unknown:
        raise ParseError(f"unknown column name(s): {', '.join(unknown)}")
    if len(set(cols)) != len(cols):
        raise ParseError("duplicate column names in header")
    if "timestamp" not in cols or "ip" not in cols:
        raise ParseError("columns must include at least 'timestamp' and 'ip'")
    return cols


def parse_ipv4(text: str) -> int:
    """Parse a dotted-quad IPv4 address to a 32-bit integer.

    IPv6 and anything else non-dotted-quad is rejected.
    """
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"invalid IPv4 address: {text!r}")
    value = 0
    for part in parts:
        if not part.isdigit():
            raise ValueError(f"invalid IPv4 address: {text!r}")
        octet = int(part)
        if octet > 255:
            raise ValueError(f"invalid IPv4 address: {text!r}")
        value = (value << 8) | octet
    return value


def format_ipv4(value: int) -> str:
    return f"{(value >> 24) & 255}.{(value >> 16) & 255}.{(value >> 8) & 255}.{value & 255}"


def parse_timestamp(text: str) -> int:
    """Accept Unix seconds or ISO-8601; normalize to Unix seconds UTC.

    Naive ISO datetimes are taken as UTC.  Timestamps must be positive.
    """
    text = text.strip()
    ts: int
    try:
        ts = int(text)
    except ValueError:
        try:
            ts = int(float(text))
        except ValueError:
            iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
            try:
                dt = datetime.fromisoformat(iso)
            except ValueError:
                raise ValueError(f"unparsable timestamp: {text!r}") from None
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            ts = int(dt.timestamp())
    if ts <= 0:
        raise ValueError(f"timestamp must be positive, got {text!r}")
    return ts


def _fields_to_report(fields: dict[str, object], line_no: int | None) -> Report:
    def bad(name: str, message: str) -> ParseError:
        return ParseError(message, field=name, line_no=line_no)

    def text(name: str) -> str | None:
        raw = fields.get(name)
        if raw is None:
            return None
        s = str(raw).strip()
        return s or None

    raw_ts = text("timestamp")
    if raw_ts is None:
        raise bad("timestamp", "missing timestamp")
    try:
        timestamp = parse_timestamp(raw_ts)
    except ValueError as exc:
        raise bad("timestamp", str(exc)) from None

    raw_ip = text("ip")
    if raw_ip is None:
        raise bad("ip", "missing ip")
    try:
        ip = parse_ipv4(raw_ip)
    except ValueError as exc:
        raise bad("ip", str(exc)) from None

    activity = None
    raw_activity = text("activity")
    if raw_activity is not None:
        try:
            activity = ActivityClass.from_label(raw_activity)
        except ValueError as exc:
            raise bad("activity", str(exc)) from None

    av_positives = av_total = None
    raw_pos, raw_tot = text("av_positives"), text("av_total")
    if raw_pos is not None:
        try:
            av_positives = int(raw_pos)
        except ValueError:
            raise bad("av_positives", f"not an integer: {raw_pos!r}") from None
        if av_positives < 0:
            raise bad("av_positives", "must be non-negative")
    if raw_tot is not None:
        try:
            av_total = int(raw_tot)
        except ValueError:
            raise bad("av_total", f"not an integer: {raw_tot!r}") from None
        if av_total <= 0:
            raise bad("av_total", "must be positive")
    if av_positives is not None and av_total is not None and av_positives > av_total:
        raise bad("av_positives", f"av_positives {av_positives} exceeds av_total {av_total}")

    asn = None
    raw_asn = text("asn")
    if raw_asn is not None:
        if raw_asn.upper().startswith("AS"):
            raw_asn = raw_asn[2:]
        try:
            asn = int(raw_asn)
        except ValueError:
            raise bad("asn", f"not an AS number: {raw_asn!r}") from None
        if asn <= 0:
            raise bad("asn", "AS number must be positive")

    country = text("country")
    if country is not None:
        country = country.upper()
        if len(country) != 2 or not country.isalpha():
            raise bad("country", f"not a 2-letter country code: {country!r}")

    return Report(
        timestamp=timestamp,
        ip=ip,
        url=text("url"),
        activity=activity,
        source=text("source") or "",
        av_positives=av_positives,
        av_total=av_total,
        asn=asn,
        country=country,
        organization=text("organization"),
    )


def parse_report_line(line: str, fmt: FormatSpec, line_no: int | None = None) -> Report:
    """Parse one record in the declared format.

    For CSV the format must declare its columns (a lone line has no header).
    """
    if fmt.kind == "jsonl":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no=line_no) from None
        if not isinstance(obj, dict):
            raise ParseError("JSON record is not an object", line_no=line_no)
        known = {k: v for k, v in obj.items() if k in CANONICAL_COLUMNS}
        return _fields_to_report(known, line_no)
    if fmt.columns is None:
        raise ParseError("CSV FormatSpec must declare columns to parse a bare line",
                         line_no=line_no)
    row = next(csv.reader([line]))
    if len(row) != len(fmt.columns):
        raise ParseError(
            f"expected {len(fmt.columns)} fields, got {len(row)}", line_no=line_no)
    return _fields_to_report(dict(zip(fmt.columns, row)), line_no)


def _infer_format(path: str) -> FormatSpec:
    if path.endswith((".jsonl", ".ndjson", ".json")):
        return FormatSpec(kind="jsonl")
    return FormatSpec(kind="csv")


def iter_report_file(path: str, fmt: FormatSpec | None = None, *,
                     mode: str = "lenient",
                     on_skip: Callable[[ParseError], None] | None = None) -> Iterator[Report]:
    """Stream reports from one file.

    In lenient mode malformed rows are skipped (reported through ``on_skip``);
    strict mode raises on the first bad row with file and line context.
    """
    if mode not in ("lenient", "strict"):
        raise ValueError(f"unknown parse mode {mode!r}")
    if fmt is None:
        fmt = _infer_format(path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(f"cannot read input: {exc}", path=path) from None
    with fh:
        yield from _iter_report_stream(fh, fmt, path=path, mode=mode, on_skip=on_skip)


def _iter_report_stream(fh: TextIO, fmt: FormatSpec, *, path: str | None,
                        mode: str,
                        on_skip: Callable[[ParseError], None] | None) -> Iterator[Report]:
    strict = mode == "strict"
    if fmt.kind == "jsonl":
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield parse_report_line(line, fmt, line_no)
            except ParseError as exc:
                if strict:
                    raise exc.with_context(path=path) from None
                if on_skip is not None:
                    on_skip(exc.with_context(path=path))
        return

    reader = csv.reader(fh)
    columns = fmt.columns
    first_data_line = 1
    if columns is None:
        try:
            header = next(reader)
        except StopIteration:
            return
        try:
            columns = _check_columns(header)
        except ParseError as exc:
            raise exc.with_context(path=path, line_no=1) from None
        first_data_line = 2
    ncols = len(columns)
    for line_no, row in enumerate(reader, start=first_data_line):
        if not row:
            continue
        try:
            if len(row) != ncols:
                raise ParseError(f"expected {ncols} fields, got {len(row)}",
                                 line_no=line_no)
            yield _fields_to_report(dict(zip(columns, row)), line_no)
        except ParseError as exc:
            if strict:
                raise exc.with_context(path=path, line_no=line_no) from None
            if on_skip is not None:
                on_skip(exc.with_context(path=path, line_no=line_no))


def dedupe(reports: Iterable[Report]) -> list[Report]:
    """Drop later repeats of a (timestamp, ip, url) triple, keeping input order.

    An absent URL is its own distinct value: a URL-less report and a URL-bearing
    one at the same (timestamp, ip) are different observations.
    """
    seen: set[tuple[int, int, Optional[str]]] = set()
    out: list[Report] = []
    for r in reports:
        key = (r.timestamp, r.ip, r.url)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


def _sort_key(r: Report):
    # Absent URL sorts before any string so shuffled input resorts identically.
    return (r.timestamp, r.ip, r.url is not None, r.url or "", r.source)


@dataclass(frozen=True)
class ReportStore:
    """Immutable, timestamp-sorted, deduplicated report collection."""

    reports: tuple[Report, ...]
    t_min: int
    t_max: int
    skipped_rows: int = field(default=0, compare=False)

    @classmethod
    def from_reports(cls, reports: Iterable[Report], *, skipped_rows: int = 0) -> "ReportStore":
        unique = dedupe(reports)
        unique.sort(key=_sort_key)
        if unique:
            t_min, t_max = unique[0].timestamp, unique[-1].timestamp
        else:
            t_min = t_max = 0
        return cls(reports=tuple(unique), t_min=t_min, t_max=t_max,
                   skipped_rows=skipped_rows)

    def __len__(self) -> int:
        return len(self.reports)

    def __iter__(self) -> Iterator[Report]:
        return iter(self.reports)

    def by_ip(self) -> dict[int, list[Report]]:
        """Group reports per IP (built on demand; order follows store order)."""
        groups: dict[int, list[Report]] = {}
        for r in self.reports:
            groups.setdefault(r.ip, []).append(r)
        return groups

    def sources(self) -> dict[str, int]:
        """Last covered timestamp per feed source."""
        last: dict[str, int] = {}
        for r in self.reports:
            prev = last.get(r.source)
            if prev is None or r.timestamp > prev:
                last[r.source] = r.timestamp
        return last


def build_store(paths: Sequence[str],
                formats: FormatSpec | Sequence[FormatSpec | None] | None = None,
                *, mode: str = "lenient", threads: int = 1) -> ReportStore:
    """Parse files, concatenate, deduplicate and sort into a store.

    ``formats`` may be one spec for all paths, one per path, or ``None`` to
    infer from file suffixes.  Per-file parsing runs on up to ``threads``
    workers; the merge order always follows the path order, so the result is
    independent of the thread count.
    """
    if isinstance(formats, FormatSpec) or formats is None:
        fmts: list[FormatSpec | None] = [formats] * len(paths)
    else:
        fmts = list(formats)
        if len(fmts) != len(paths):
            raise ValueError("one FormatSpec per path required")

    skipped = 0

    def parse_one(path: str, fmt: FormatSpec | None) -> tuple[list[Report], int]:
        errors: list[ParseError] = []
        rows = list(iter_report_file(path, fmt, mode=mode, on_skip=errors.append))
        return rows, len(errors)

    with _gc_paused():
        if threads > 1 and len(paths) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(parse_one, paths, fmts))
        else:
            results = [parse_one(p, f) for p, f in zip(paths, fmts)]

        all_reports: list[Report] = []
        for rows, n_skipped in results:
            all_reports.extend(rows)
            skipped += n_skipped
        return ReportStore.from_reports(all_reports, skipped_rows=skipped)


def report_to_row(r: Report) -> list[str]:
    return [
        str(r.timestamp),
        format_ipv4(r.ip),
        r.url or "",
        r.activity.value if r.activity is not None else "",
        r.source,
        "" if r.av_positives is None else str(r.av_positives),
        "" if r.av_total is None else str(r.av_total),
        "" if r.asn is None else str(r.asn),
        r.country or "",
        r.organization or "",
    ]


def write_store_csv(store: ReportStore, out: TextIO | str) -> None:
    """Serialize a store to the canonical CSV; re-parsing reproduces it."""
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_store_csv(store, fh)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    writer.writerows(report_to_row(r) for r in store.reports)


def store_to_csv_text(store: ReportStore) -> str:
    buf = io.StringIO()
    write_store_csv(store, buf)
    return buf.getvalue()
