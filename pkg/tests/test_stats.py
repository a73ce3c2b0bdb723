from __future__ import annotations

import math

import numpy as np
import pytest

from malfeed import (ActivityClass, Granularity, Level, ReportStore, ecdf,
                     evolution, fractional_ranks, rank_top_k, spearman,
                     volume_distribution)
from malfeed.enrich import HostKey

from conftest import make_report

WEEK = 7 * 24 * 3600


def brute_force_spearman(x, y):
    """Independent oracle: per-element rank counting, then explicit Pearson."""
    def ranks(values):
        out = []
        for v in values:
            less = sum(1 for u in values if u < v)
            equal = sum(1 for u in values if u == v)
            out.append(less + (equal + 1) / 2.0)
        return out

    rx, ry = ranks(x), ranks(y)
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def test_spearman_hand_fixtures():
    assert spearman([1, 2, 3], [2, 4, 6]) == 1.0
    assert spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-12)
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0


def test_spearman_matches_brute_force_with_ties():
    rng = np.random.default_rng(23)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        # coarse integer grids force plenty of rank ties
        x = rng.integers(0, 6, size=n).astype(float).tolist()
        y = rng.integers(0, 6, size=n).astype(float).tolist()
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert spearman(x, y) == pytest.approx(brute_force_spearman(x, y), abs=1e-12)


def test_spearman_monotone_transform_invariance():
    rng = np.random.default_rng(29)
    for _ in range(25):
        x = rng.normal(size=20).tolist()
        y = rng.normal(size=20).tolist()
        base = spearman(x, y)
        assert spearman([math.exp(v) for v in x], y) == pytest.approx(base, abs=1e-12)
        assert spearman(x, [v ** 3 for v in y]) == pytest.approx(base, abs=1e-12)


def test_spearman_self_and_reflection():
    rng = np.random.default_rng(31)
    x = rng.normal(size=25).tolist()
    assert spearman(x, x) == pytest.approx(1.0, abs=1e-12)
    assert spearman(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)


def test_spearman_bounded():
    rng = np.random.default_rng(37)
    for _ in range(50):
        x = rng.integers(0, 10, size=15).astype(float)
        y = rng.integers(0, 10, size=15).astype(float)
        if len(set(x.tolist())) < 2 or len(set(y.tolist())) < 2:
            continue
        assert abs(spearman(x, y)) <= 1.0 + 1e-12


def test_spearman_degenerate_inputs():
    with pytest.raises(ValueError):
        spearman([1], [2])
    with pytest.raises(ValueError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [5, 5, 5])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])


def test_fractional_ranks_average_ties():
    assert fractional_ranks([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]


def test_evolution_week_counts_and_proportions():
    reports = [
        make_report(WEEK + 5, "1.1.1.1", ActivityClass.MALWARE),
        make_report(WEEK + 6, "1.1.1.2", ActivityClass.MALWARE),
        make_report(WEEK + 7, "1.1.1.3", ActivityClass.PHISHING),
    ]
    series = evolution(ReportStore.from_reports(reports), "week")
    assert len(series.points) == 1
    point = series.points[0]
    assert point.counts[ActivityClass.MALWARE] == 2
    assert point.counts[ActivityClass.PHISHING] == 1
    props = point.proportions()
    assert props[ActivityClass.MALWARE] == pytest.approx(2 / 3)
    assert props[ActivityClass.SPAMMERS] == 0.0
    assert sum(props.values()) == pytest.approx(1.0, abs=1e-9)


def test_evolution_marginalizes_to_store_totals(hand_store):
    for granularity in Granularity:
        series = evolution(hand_store, granularity)
        totals = series.class_totals()
        for a in ActivityClass:
            assert totals[a] == sum(1 for r in hand_store if r.activity is a)


def test_evolution_bins_strictly_increasing(hand_store):
    series = evolution(hand_store, "day")
    bins = [p.bin for p in series.points]
    assert bins == sorted(set(bins))


def test_evolution_unlabeled_tracked_separately():
    reports = [make_report(WEEK, "1.1.1.1"),
               make_report(WEEK + 1, "1.1.1.2", ActivityClass.PUP)]
    series = evolution(ReportStore.from_reports(reports), "week")
    (point,) = series.points
    assert point.unlabeled == 1
    assert point.labeled_total == 1
    assert point.proportions()[ActivityClass.PUP] == 1.0


def test_evolution_month_bins():
    jan = make_report(1484006400, "1.1.1.1", ActivityClass.MALWARE)   # 2017-01-10
    feb = make_report(1486684800, "1.1.1.1", ActivityClass.MALWARE)   # 2017-02-10
    series = evolution(ReportStore.from_reports([jan, feb]), "month")
    assert [p.start for p in series.points] == ["2017-01-01", "2017-02-01"]


def test_ecdf_fixture():
    steps = ecdf([1, 1, 3])
    assert steps == ((1, pytest.approx(2 / 3)), (3, pytest.approx(1.0)))
    with pytest.raises(ValueError):
        ecdf([])


def test_volume_distribution(hand_store):
    dist = volume_distribution(hand_store, Level.IP)
    sizes = sorted(dist.counts.values())
    assert sizes == [1, 2, 3]
    assert dist.repeat_offender_share == pytest.approx(2 / 3)
    assert dist.cdf[-1][1] == pytest.approx(1.0)


def test_volume_distribution_single_host():
    store = ReportStore.from_reports([make_report(100 + i, "1.1.1.1")
                                      for i in range(4)])
    dist = volume_distribution(store, Level.IP)
    assert dist.cdf == ((4, pytest.approx(1.0)),)
    assert dist.repeat_offender_share == 1.0


def _key(value):
    return HostKey(Level.CC, value)


def test_rank_top_k_descending_default():
    table = {_key("a"): 3.0, _key("b"): 5.0}
    assert rank_top_k(table, "lifetime", 1) == [(_key("b"), 5.0)]


def test_rank_top_k_deathtime_ascending():
    table = {_key("x"): 3.0, _key("y"): 1.5}
    ranked = rank_top_k(table, "deathtime", 2)
    assert [k.value for k, _v in ranked] == ["y", "x"]


def test_rank_top_k_overflow_and_ties():
    table = {_key("b"): 2.0, _key("a"): 2.0, _key("c"): 1.0}
    ranked = rank_top_k(table, "severity", 10)
    assert [k.value for k, _v in ranked] == ["a", "b", "c"]  # tie broken by label


def test_rank_top_k_skips_undefined():
    table = {_key("a"): None, _key("b"): 1.0}
    assert rank_top_k(table, "roa", 5) == [(_key("b"), 1.0)]
    with pytest.raises(ValueError):
        rank_top_k(table, "roa", -1)
