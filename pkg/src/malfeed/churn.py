"""Alternating-renewal churn statistics over weekly ON/OFF traces.

A host's trace is its report count per absolute 7-day window counted from the
Unix epoch (cross-host comparable bins), trimmed to the active span.  Maximal
runs of nonzero weeks are lifetimes; the zero-run after each becomes its
deathtime.  The trailing lifetime is fully observed and counts toward the
mean lifetime, but the trailing OFF run is right-censored and never counts
toward the mean deathtime (survival analysis handles that censoring).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .enrich import HostKey, Level, mapped_groups
from .ingest import ActivityClass, Report, ReportStore

WEEK_SECONDS = 7 * 24 * 3600


def week_index(timestamp: int, anchor: int = 0) -> int:
    """Absolute week bin of a timestamp (floor division, exclusive boundary)."""
    return (timestamp - anchor) // WEEK_SECONDS


@dataclass(frozen=True)
class WeeklyTrace:
    """Per-week report counts for one host, trimmed so both ends are active."""

    bins: tuple[int, ...]
    origin_week: int
    host: HostKey | None = None

    def __post_init__(self) -> None:
        if not self.bins:
            raise ValueError("trace has no bins")
        if self.bins[0] <= 0 or self.bins[-1] <= 0:
            raise ValueError("trace must be trimmed to its active span")
        if any(b < 0 for b in self.bins):
            raise ValueError("bin counts must be non-negative")

    @property
    def total_reports(self) -> int:
        return sum(self.bins)


@dataclass(frozen=True)
class Cycle:
    """One ON run and the OFF run that follows it.

    ``deathtime`` is ``None`` for the final, open-ended cycle: no later ON
    period bounds it.
    """

    lifetime: int
    reports: int
    deathtime: Optional[int] = None

    def __post_init__(self) -> None:
        if self.lifetime < 1:
            raise ValueError("cycle lifetime must be at least one week")
        if self.reports < self.lifetime:
            raise ValueError("each active week carries at least one report")
        if self.deathtime is not None and self.deathtime < 1:
            raise ValueError("a closed deathtime must be at least one week")

    @property
    def closed(self) -> bool:
        return self.deathtime is not None

    @property
    def severity(self) -> float:
        return self.reports / self.lifetime


@dataclass(frozen=True)
class ChurnSummary:
    """Per-host cycle averages: lifetime, deathtime, arrival rate, severity."""

    mean_lifetime: float
    mean_deathtime: Optional[float]
    rate_of_arrival: Optional[float]
    severity: float
    n_cycles: int
    host: HostKey | None = None


def build_trace(reports: Sequence[Report], host: HostKey | None = None,
                anchor: int = 0) -> WeeklyTrace:
    """Bin one host's reports into weeks and trim to the active span."""
    if not reports:
        raise ValueError("cannot build a trace from no reports")
    weeks = [(r.timestamp - anchor) // WEEK_SECONDS for r in reports]
    lo = min(weeks)
    bins = [0] * (max(weeks) - lo + 1)
    for w in weeks:
        bins[w - lo] += 1
    return WeeklyTrace(bins=tuple(bins), origin_week=lo, host=host)


def cycles_from_bins(bins: Sequence[int]) -> tuple[Cycle, ...]:
    """Run-length read of a trimmed bin sequence into cycles."""
    cycles: list[Cycle] = []
    n = len(bins)
    i = 0
    while i < n:
        j = i
        reports = 0
        while j < n and bins[j] > 0:
            reports += bins[j]
            j += 1
        lifetime = j - i
        k = j
        while k < n and bins[k] == 0:
            k += 1
        deathtime = (k - j) if k < n else None
        cycles.append(Cycle(lifetime=lifetime, reports=reports, deathtime=deathtime))
        i = k
    return tuple(cycles)


def extract_cycles(trace: WeeklyTrace) -> tuple[Cycle, ...]:
    return cycles_from_bins(trace.bins)


def trace_from_cycles(cycles: Sequence[Cycle], host: HostKey | None = None,
                      origin_week: int = 0) -> WeeklyTrace:
    """Rebuild a trace realizing the given cycles (open tail, no trailing zeros).

    The surplus reports of each cycle are piled into its first week, which is
    one valid realization; re-extracting the cycles is the identity either way.
    Every cycle except the last must be closed.
    """
    if not cycles:
        raise ValueError("no cycles to rebuild from")
    bins: list[int] = []
    for idx, c in enumerate(cycles):
        last = idx == len(cycles) - 1
        if last and c.closed:
            raise ValueError("final cycle must be open-ended to rebuild a trimmed trace")
        if not last and not c.closed:
            raise ValueError("only the final cycle may be open-ended")
        bins.append(c.reports - (c.lifetime - 1))
        bins.extend([1] * (c.lifetime - 1))
        if not last:
            bins.extend([0] * c.deathtime)  # type: ignore[arg-type]
    return WeeklyTrace(bins=tuple(bins), origin_week=origin_week, host=host)


def summarize(cycles: Sequence[Cycle], host: HostKey | None = None) -> ChurnSummary:
    """Average the cycle set.

    The mean lifetime averages every lifetime including the open final one;
    the mean deathtime averages closed deathtimes only and is undefined when
    there are none, in which case the arrival rate is undefined too.
    """
    if not cycles:
        raise ValueError("cannot summarize an empty cycle sequence")
    mean_lifetime = math.fsum(c.lifetime for c in cycles) / len(cycles)
    closed = [c.deathtime for c in cycles if c.deathtime is not None]
    mean_deathtime = math.fsum(closed) / len(closed) if closed else None
    rate = 1.0 / (mean_lifetime + mean_deathtime) if mean_deathtime is not None else None
    severity = math.fsum(c.reports / c.lifetime for c in cycles) / len(cycles)
    return ChurnSummary(
        mean_lifetime=mean_lifetime,
        mean_deathtime=mean_deathtime,
        rate_of_arrival=rate,
        severity=severity,
        n_cycles=len(cycles),
        host=host,
    )


def churn_summaries(store: ReportStore, level: Level,
                    activity: ActivityClass | None = None,
                    anchor: int = 0) -> dict[HostKey, ChurnSummary]:
    """Per-host churn summaries at a level, optionally for one activity class.

    Unmapped hosts are excluded.  With an activity filter, traces are built
    from that class's reports only; hosts without any drop out of the map.
    """
    out: dict[HostKey, ChurnSummary] = {}
    for host, reports in mapped_groups(store, level).items():
        if activity is not None:
            reports = [r for r in reports if r.activity is activity]
            if not reports:
                continue
        trace = build_trace(reports, host=host, anchor=anchor)
        out[host] = summarize(extract_cycles(trace), host=host)
    return out


def churn_by_class(store: ReportStore, level: Level,
                   activity: ActivityClass) -> dict[HostKey, ChurnSummary]:
    return churn_summaries(store, level, activity)


def summaries_from_weekly_counts(
        counts: Mapping[HostKey, Mapping[int, int]]) -> dict[HostKey, ChurnSummary]:
    """Summarize sparse per-host week->count maps (the streaming substrate)."""
    out: dict[HostKey, ChurnSummary] = {}
    for host, week_counts in counts.items():
        if not week_counts:
            continue
        lo, hi = min(week_counts), max(week_counts)
        bins = [0] * (hi - lo + 1)
        for w, c in week_counts.items():
            bins[w - lo] = c
        out[host] = summarize(cycles_from_bins(bins), host=host)
    return out


def normalized_severity(summaries: Mapping[HostKey, ChurnSummary]) -> dict[HostKey, float]:
    """Severity divided by the population maximum; plotting aid only."""
    if not summaries:
        return {}
    top = max(s.severity for s in summaries.values())
    return {h: s.severity / top for h, s in summaries.items()}
