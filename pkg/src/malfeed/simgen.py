"""Synthetic corpora from the alternating-renewal churn model.

Each host alternates geometric ON and OFF runs (the discrete memoryless
choice; the model is in whole weeks) truncated at the horizon.  Every ON
week emits 1 + Poisson(rate - 1) reports at distinct uniform seconds inside
the week, so an active week always carries at least one report and the
emitted trace reproduces the generator's cycle log exactly.

Simulated weeks sit on the same absolute epoch-week grid the churn module
bins with, starting at a fixed origin week so timestamps stay positive.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import IO, Iterator, Mapping

import numpy as np

from .churn import WEEK_SECONDS, Cycle
from .enrich import HostKey, Level
from .ingest import (ActivityClass, CANONICAL_COLUMNS, Report, ReportStore,
                     _gc_paused, format_ipv4)

#: Simulated week 0 maps to this absolute epoch week (early 2007).
SIM_ORIGIN_WEEK = 1930
#: Simulated hosts live in 10.0.0.0/8, one address per host index.
SIM_IP_BASE = 10 << 24
SIM_SOURCE = "sim"

_UNIFORM_MIX = {a: 1.0 / len(ActivityClass) for a in ActivityClass}


@dataclass(frozen=True)
class SimParams:
    n_hosts: int
    mean_lifetime: float
    mean_deathtime: float
    horizon: int
    reports_per_active_week: float = 1.0
    class_mix: Mapping[ActivityClass, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_hosts < 1:
            raise ValueError("n_hosts must be at least 1")
        if self.n_hosts > (1 << 24):
            raise ValueError("n_hosts exceeds the simulated 10.0.0.0/8 block")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one week")
        if self.mean_lifetime < 1.0:
            raise ValueError("mean_lifetime must be at least one week")
        if self.mean_deathtime < 1.0:
            raise ValueError("mean_deathtime must be at least one week")
        if self.reports_per_active_week < 1.0:
            raise ValueError("an active week carries at least one report on average")
        if self.class_mix is not None:
            mix = dict(self.class_mix)
            if any(not isinstance(key, ActivityClass) for key in mix):
                raise ValueError("class_mix keys must be ActivityClass values")
            if any(p < 0 for p in mix.values()):
                raise ValueError("class_mix probabilities must be non-negative")
            if not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
                raise ValueError("class_mix must sum to 1")

    def mix_vector(self) -> np.ndarray:
        mix = dict(self.class_mix) if self.class_mix is not None else _UNIFORM_MIX
        return np.asarray([mix.get(a, 0.0) for a in ActivityClass], dtype=float)


@dataclass(frozen=True)
class SimResult:
    store: ReportStore
    truth: dict[HostKey, tuple[Cycle, ...]]
    params: SimParams


def _multi_arange(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenation of arange(s, s+l) for each span, without a Python loop."""
    total = int(lengths.sum())
    steps = np.ones(total, dtype=np.int64)
    steps[0] = starts[0]
    if starts.size > 1:
        positions = np.cumsum(lengths)[:-1]
        steps[positions] = starts[1:] - (starts[:-1] + lengths[:-1]) + 1
    return np.cumsum(steps)


def _generate_host(rng: np.random.Generator, params: SimParams,
                   mix_cdf: np.ndarray) -> tuple[ActivityClass, np.ndarray, tuple[Cycle, ...]]:
    """One host's activity class, sorted distinct timestamps, and cycle log."""
    activity = list(ActivityClass)[int(np.searchsorted(mix_cdf, rng.random(),
                                                       side="right"))]
    horizon = params.horizon
    # a closed cycle spans at least 2 weeks, so this many draws always suffice
    max_cycles = horizon // 2 + 2
    lifetimes = rng.geometric(1.0 / params.mean_lifetime, size=max_cycles)
    offtimes = rng.geometric(1.0 / params.mean_deathtime, size=max_cycles)

    starts: list[int] = []
    lengths: list[int] = []
    deaths: list[int | None] = []
    week = 0
    for lifetime, off in zip(lifetimes, offtimes):
        effective = min(int(lifetime), horizon - week)
        starts.append(week)
        lengths.append(effective)
        week += effective
        if week >= horizon:
            deaths.append(None)           # ON run truncated: open cycle
            break
        if week + off >= horizon:
            deaths.append(None)           # no later ON run bounds this OFF run
            break
        deaths.append(int(off))
        week += off

    starts_arr = np.asarray(starts, dtype=np.int64)
    lengths_arr = np.asarray(lengths, dtype=np.int64)
    on_weeks = _multi_arange(starts_arr, lengths_arr) + SIM_ORIGIN_WEEK
    rate = params.reports_per_active_week
    if rate > 1.0:
        counts = 1 + rng.poisson(rate - 1.0, size=on_weeks.size)
        week_of = np.repeat(on_weeks, counts)
    else:
        week_of = on_weeks
    offsets = rng.integers(0, WEEK_SECONDS, size=week_of.size)
    # np.unique drops second-level collisions: every ON week keeps >= 1 report
    # and the cycle log below is derived from the deduplicated timestamps
    timestamps = np.unique(week_of * WEEK_SECONDS + offsets)
    report_weeks = timestamps // WEEK_SECONDS - SIM_ORIGIN_WEEK

    los = np.searchsorted(report_weeks, starts_arr, side="left")
    his = np.searchsorted(report_weeks, starts_arr + lengths_arr, side="left")
    cycles = tuple(
        Cycle(lifetime=int(length), reports=int(hi - lo), deathtime=death)
        for length, lo, hi, death in zip(lengths_arr, los, his, deaths)
    )
    return activity, timestamps, cycles


def iter_hosts(params: SimParams
               ) -> Iterator[tuple[int, ActivityClass, np.ndarray, tuple[Cycle, ...]]]:
    """Per-host generation stream: (host ip, class, sorted timestamps, cycles).

    Hosts derive independent sub-seeds from the corpus seed, so the stream is
    deterministic regardless of how callers consume it.
    """
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_hosts)
    # exclusive-of-right cumulative mix: searchsorted(right) inverts the CDF
    mix_cdf = np.cumsum(params.mix_vector())[:-1]
    for index, seq in enumerate(seeds):
        activity, timestamps, cycles = _generate_host(
            np.random.default_rng(seq), params, mix_cdf)
        yield SIM_IP_BASE | index, activity, timestamps, cycles


def simulate(params: SimParams) -> SimResult:
    """Generate the corpus as a ReportStore plus the ground-truth cycle log."""
    ts_parts: list[np.ndarray] = []
    host_ips: list[int] = []
    host_codes: list[int] = []
    host_sizes: list[int] = []
    truth: dict[HostKey, tuple[Cycle, ...]] = {}
    class_list = list(ActivityClass)

    for ip, activity, timestamps, cycles in iter_hosts(params):
        truth[HostKey(Level.IP, format_ipv4(ip))] = cycles
        ts_parts.append(timestamps)
        host_ips.append(ip)
        host_codes.append(class_list.index(activity))
        host_sizes.append(timestamps.size)

    sizes = np.asarray(host_sizes, dtype=np.int64)
    ts = np.concatenate(ts_parts)
    ips = np.repeat(np.asarray(host_ips, dtype=np.int64), sizes)
    codes = np.repeat(np.asarray(host_codes, dtype=np.int64), sizes)
    order = np.lexsort((ips, ts))  # matches the store sort key: timestamps tie on ip

    ts_list = ts[order].tolist()
    ip_list = ips[order].tolist()
    act_list = np.asarray(class_list, dtype=object)[codes[order]].tolist()
    with _gc_paused():
        reports = tuple(map(Report, ts_list, ip_list, itertools.repeat(None),
                            act_list, itertools.repeat(SIM_SOURCE)))
    store = ReportStore(reports=reports,
                        t_min=int(ts_list[0]), t_max=int(ts_list[-1]))
    return SimResult(store=store, truth=truth, params=params)


def write_sim_csv(params: SimParams, out: IO[str],
                  truth_out: IO[str] | None = None) -> int:
    """Stream the corpus to canonical CSV; returns the number of rows written.

    Row order groups by host rather than global timestamp (ingestion
    normalizes); the report set is identical to :func:`simulate`'s.  When
    ``truth_out`` is given the ground-truth cycle log streams alongside.
    """
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    truth_writer = None
    if truth_out is not None:
        truth_writer = csv.writer(truth_out, lineterminator="\n")
        truth_writer.writerow(TRUTH_COLUMNS)
    n = 0
    for ip, activity, timestamps, cycles in iter_hosts(params):
        ip_text = format_ipv4(ip)
        label = activity.value
        writer.writerows(
            [str(t), ip_text, "", label, SIM_SOURCE, "", "", "", "", ""]
            for t in timestamps.tolist())
        n += timestamps.size
        if truth_writer is not None:
            for i, cycle in enumerate(cycles):
                truth_writer.writerow([
                    ip_text, i, cycle.lifetime, cycle.reports,
                    "" if cycle.deathtime is None else cycle.deathtime,
                ])
    return n


TRUTH_COLUMNS = ("host", "cycle", "lifetime", "reports", "deathtime")


def write_truth_csv(truth: Mapping[HostKey, tuple[Cycle, ...]], out: IO[str]) -> None:
    """Ground-truth cycle log: one row per (host, cycle index)."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRUTH_COLUMNS)
    for host in sorted(truth, key=lambda h: h.label()):
        for i, cycle in enumerate(truth[host]):
            writer.writerow([
                host.label(), i, cycle.lifetime, cycle.reports,
                "" if cycle.deathtime is None else cycle.deathtime,
            ])
