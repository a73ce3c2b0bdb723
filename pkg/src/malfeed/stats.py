"""Cross-cutting descriptive statistics: rank correlation, time series,
volume distributions and top-K tables.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .churn import WEEK_SECONDS
from .enrich import HostKey, Level, mapped_groups
from .ingest import ActivityClass, Report, ReportStore


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties receiving the average of their positions."""
    a = np.asarray(values, dtype=float)
    n = a.size
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(n, dtype=float)
    sorted_vals = a[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of fractional ranks.

    Requires at least two pairs and non-constant coordinates.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if xa.size < 2:
        raise ValueError("need at least two pairs")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise ValueError("correlation is undefined for a constant series")
    rx = fractional_ranks(xa)
    ry = fractional_ranks(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    return float((rx * ry).sum()) / denom


class Granularity(enum.Enum):
    DAY = "day"
    WEEK = "week"
    MONTH = "month"

    @classmethod
    def parse(cls, text: str) -> "Granularity":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown granularity {text!r}") from None


def bin_index(ts: int, granularity: Granularity) -> int:
    if granularity is Granularity.DAY:
        return ts // 86400
    if granularity is Granularity.WEEK:
        return ts // WEEK_SECONDS
    tm = time.gmtime(ts)
    return (tm.tm_year - 1970) * 12 + tm.tm_mon - 1


def bin_start(bin_id: int, granularity: Granularity) -> str:
    if granularity is Granularity.DAY:
        ts = bin_id * 86400
    elif granularity is Granularity.WEEK:
        ts = bin_id * WEEK_SECONDS
    else:
        year, month = divmod(bin_id, 12)
        return f"{1970 + year:04d}-{month + 1:02d}-01"
    return time.strftime("%Y-%m-%d", time.gmtime(ts))


@dataclass(frozen=True)
class TimePoint:
    bin: int
    start: str
    counts: dict[ActivityClass, int]
    unlabeled: int = 0

    @property
    def labeled_total(self) -> int:
        return sum(self.counts.values())

    def proportions(self) -> dict[ActivityClass, float]:
        total = self.labeled_total
        if total == 0:
            return {a: 0.0 for a in self.counts}
        return {a: c / total for a, c in self.counts.items()}


@dataclass(frozen=True)
class TimeSeries:
    granularity: Granularity
    points: tuple[TimePoint, ...]

    def class_totals(self) -> dict[ActivityClass, int]:
        totals = {a: 0 for a in ActivityClass}
        for p in self.points:
            for a, c in p.counts.items():
                totals[a] += c
        return totals


def evolution(store: ReportStore | Iterable[Report],
              granularity: Granularity | str = Granularity.WEEK) -> TimeSeries:
    """Per-bin volume of each activity class over time, in bin order.

    Reports without a class label are tallied separately per bin; the
    companion proportions normalize over the six classes only.
    """
    if isinstance(granularity, str):
        granularity = Granularity.parse(granularity)
    counts: dict[int, dict[ActivityClass, int]] = {}
    unlabeled: dict[int, int] = {}
    for r in store:
        b = bin_index(r.timestamp, granularity)
        if r.activity is None:
            unlabeled[b] = unlabeled.get(b, 0) + 1
            counts.setdefault(b, {a: 0 for a in ActivityClass})
        else:
            per_class = counts.setdefault(b, {a: 0 for a in ActivityClass})
            per_class[r.activity] += 1
    points = tuple(
        TimePoint(bin=b, start=bin_start(b, granularity), counts=counts[b],
                  unlabeled=unlabeled.get(b, 0))
        for b in sorted(counts)
    )
    return TimeSeries(granularity=granularity, points=points)


def ecdf(values: Sequence[float]) -> tuple[tuple[float, float], ...]:
    """Empirical CDF as (value, fraction <= value) over distinct values."""
    if not values:
        raise ValueError("ecdf of an empty sample is undefined")
    ordered = sorted(values)
    n = len(ordered)
    steps: list[tuple[float, float]] = []
    for i, v in enumerate(ordered):
        if i + 1 == n or ordered[i + 1] != v:
            steps.append((v, (i + 1) / n))
    return tuple(steps)


@dataclass(frozen=True)
class VolumeDistribution:
    counts: dict[HostKey, int]
    cdf: tuple[tuple[float, float], ...]

    @property
    def repeat_offender_share(self) -> float:
        if not self.counts:
            return 0.0
        return sum(1 for c in self.counts.values() if c > 1) / len(self.counts)


def volume_distribution(store: ReportStore, level: Level) -> VolumeDistribution:
    """Reports per host at a level, with the ECDF over those group sizes."""
    counts = {host: len(reports) for host, reports in mapped_groups(store, level).items()}
    if not counts:
        return VolumeDistribution(counts={}, cdf=())
    return VolumeDistribution(counts=counts, cdf=ecdf(list(counts.values())))


#: Ranking direction per metric name; deathtime ranks most-resilient first.
ASCENDING_METRICS = frozenset({"deathtime"})


def rank_top_k(metric_table: Mapping[HostKey, Optional[float]], by: str,
               k: int) -> list[tuple[HostKey, float]]:
    """Top-k hosts by a metric; lowest-first for deathtime, highest otherwise.

    Hosts with an undefined metric are left out.  Ties break on the host
    label so the output is deterministic.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    scored = [(host, value) for host, value in metric_table.items() if value is not None]
    if by in ASCENDING_METRICS:
        scored.sort(key=lambda pair: (pair[1], pair[0].label()))
    else:
        scored.sort(key=lambda pair: (-pair[1], pair[0].label()))
    return scored[:k]
