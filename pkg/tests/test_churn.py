from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from malfeed import (ActivityClass, Cycle, Level, ReportStore, WeeklyTrace,
                     WEEK_SECONDS, build_trace, churn_by_class,
                     churn_summaries, extract_cycles, summarize,
                     trace_from_cycles)
from malfeed.churn import cycles_from_bins, summaries_from_weekly_counts

from conftest import make_report

DAY = 86400


def reports_at_days(*days: float):
    return [make_report(int(d * DAY) + 1, "10.0.0.1") for d in days]


def test_build_trace_single_window():
    trace = build_trace(reports_at_days(0, 2, 6))
    assert trace.bins == (3,)


def test_build_trace_week_boundary_exclusive():
    trace = build_trace(reports_at_days(0, 7))
    assert trace.bins == (1, 1)


def test_build_trace_floor_division_oracle():
    days = (0, 1, 20)
    trace = build_trace(reports_at_days(*days))
    # independent oracle: raw floor division on the timestamps
    weeks = [(int(d * DAY) + 1) // WEEK_SECONDS for d in days]
    expected = [0] * (max(weeks) - min(weeks) + 1)
    for w in weeks:
        expected[w - min(weeks)] += 1
    assert trace.bins == tuple(expected) == (2, 0, 1)
    assert trace.origin_week == min(weeks)


def test_build_trace_is_trimmed_and_respects_anchor():
    trace = build_trace(reports_at_days(100, 101, 115))
    assert trace.bins[0] > 0 and trace.bins[-1] > 0
    shifted = build_trace(reports_at_days(100, 101, 115), anchor=7 * DAY)
    assert shifted.origin_week == trace.origin_week - 1


def test_build_trace_empty_is_error():
    with pytest.raises(ValueError):
        build_trace([])


def test_trace_validation():
    with pytest.raises(ValueError):
        WeeklyTrace(bins=(0, 1), origin_week=0)
    with pytest.raises(ValueError):
        WeeklyTrace(bins=(1, 0), origin_week=0)
    with pytest.raises(ValueError):
        WeeklyTrace(bins=(), origin_week=0)


def test_extract_cycles_run_length_fixture():
    trace = WeeklyTrace(bins=(1, 1, 0, 0, 0, 1), origin_week=0)
    assert extract_cycles(trace) == (
        Cycle(lifetime=2, reports=2, deathtime=3),
        Cycle(lifetime=1, reports=1, deathtime=None),
    )


def test_extract_cycles_one_time_offender():
    assert extract_cycles(WeeklyTrace(bins=(5,), origin_week=0)) == (
        Cycle(lifetime=1, reports=5, deathtime=None),)


def test_extract_cycles_derived_fixture():
    # run-length oracle by hand: [2,2,0,3] -> ON(2 weeks, 4 reports) OFF(1) ON(1, 3)
    assert cycles_from_bins([2, 2, 0, 3]) == (
        Cycle(lifetime=2, reports=4, deathtime=1),
        Cycle(lifetime=1, reports=3, deathtime=None),
    )


def test_cycle_validation():
    with pytest.raises(ValueError):
        Cycle(lifetime=0, reports=1)
    with pytest.raises(ValueError):
        Cycle(lifetime=2, reports=1)  # fewer reports than active weeks
    with pytest.raises(ValueError):
        Cycle(lifetime=1, reports=1, deathtime=0)  # closed implies >= 1


def test_summarize_hand_fixture():
    cycles = extract_cycles(WeeklyTrace(bins=(1, 1, 0, 0, 0, 1), origin_week=0))
    s = summarize(cycles)
    assert s.mean_lifetime == 1.5
    assert s.mean_deathtime == 3.0
    assert s.rate_of_arrival == pytest.approx(1 / 4.5, abs=1e-12)
    assert s.severity == 1.0
    assert s.n_cycles == 2


def test_summarize_severity_nine_over_five():
    s = summarize([Cycle(lifetime=5, reports=9)])
    assert s.severity == 9 / 5


def test_summarize_one_time_offender():
    s = summarize([Cycle(lifetime=1, reports=5)])
    assert s.mean_lifetime == 1.0
    assert s.mean_deathtime is None
    assert s.rate_of_arrival is None
    assert s.severity == 5.0


def test_summarize_empty_is_error():
    with pytest.raises(ValueError):
        summarize([])


bins_strategy = st.lists(st.integers(min_value=0, max_value=9), min_size=1,
                         max_size=40).map(
    lambda bins: [1] + bins + [1])  # force trimmed ends


@given(bins_strategy)
@settings(max_examples=200, deadline=None)
def test_cycle_invariants_random_traces(bins):
    trace = WeeklyTrace(bins=tuple(bins), origin_week=0)
    cycles = extract_cycles(trace)
    assert sum(c.reports for c in cycles) == sum(bins)
    covered = sum(c.lifetime for c in cycles) + sum(
        c.deathtime for c in cycles if c.deathtime is not None)
    assert covered == len(bins)
    assert all(not c.closed for c in cycles[-1:])
    assert all(c.closed for c in cycles[:-1])

    s = summarize(cycles)
    if s.rate_of_arrival is not None:
        assert s.rate_of_arrival <= 0.5
    assert s.severity >= 1.0
    assert s.severity <= max(bins)


@given(bins_strategy)
@settings(max_examples=200, deadline=None)
def test_reconstruction_identity(bins):
    cycles = extract_cycles(WeeklyTrace(bins=tuple(bins), origin_week=0))
    rebuilt = trace_from_cycles(cycles)
    assert extract_cycles(rebuilt) == cycles


def test_strictly_alternating_trace_achieves_max_rate():
    bins = (1, 0) * 10 + (1,)
    s = summarize(cycles_from_bins(bins))
    assert s.rate_of_arrival == 0.5


def test_trace_from_cycles_rejects_inner_open_cycle():
    with pytest.raises(ValueError):
        trace_from_cycles([Cycle(1, 1, None), Cycle(1, 1, None)])
    with pytest.raises(ValueError):
        trace_from_cycles([Cycle(1, 1, 2)])  # closed final cycle


def test_churn_summaries_by_class(hand_store):
    all_summaries = churn_summaries(hand_store, Level.IP)
    malware_only = churn_by_class(hand_store, Level.IP, ActivityClass.MALWARE)
    phishing_only = churn_by_class(hand_store, Level.IP, ActivityClass.PHISHING)
    assert set(malware_only) != set(all_summaries)
    host1 = next(h for h in all_summaries if h.label() == "10.0.0.1")
    # 10.0.0.1 has malware weeks 1,1 and phishing week 2: restriction differs
    assert malware_only[host1].n_cycles == 1
    assert malware_only[host1].severity == 2.0
    assert all_summaries[host1].mean_lifetime == 2.0
    assert host1 not in phishing_only or phishing_only[host1].severity == 1.0


def test_churn_by_class_absent_class_is_empty(hand_store):
    assert churn_by_class(hand_store, Level.IP, ActivityClass.SPAMMERS) == {}


def test_summaries_from_weekly_counts_matches_store_path(hand_store):
    from malfeed.enrich import mapped_groups
    counts = {}
    for host, reports in mapped_groups(hand_store, Level.IP).items():
        weeks = {}
        for r in reports:
            w = r.timestamp // WEEK_SECONDS
            weeks[w] = weeks.get(w, 0) + 1
        counts[host] = weeks
    assert summaries_from_weekly_counts(counts) == churn_summaries(hand_store, Level.IP)
