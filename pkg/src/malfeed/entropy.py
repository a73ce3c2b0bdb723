"""Normalized-entropy diversity metrics plus the AV-score and geo-density ratios.

All three entropy metrics share one core: Shannon entropy of the count
distribution in bits, divided by log2 of the number of occupied categories.
A single occupied category normalizes to 0 (fully concentrated); a uniform
spread over k >= 2 categories gives 1.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

#: Upper bound on activity classes a single host can occupy.
MAX_ACTIVITY_CLASSES = 6


def _counts(histogram: Mapping[object, float] | Iterable[float]) -> list[float]:
    values = histogram.values() if isinstance(histogram, Mapping) else histogram
    counts = [float(v) for v in values]
    if any(c < 0 or math.isnan(c) or math.isinf(c) for c in counts):
        raise ValueError("histogram counts must be finite and non-negative")
    return counts


def normalized_entropy(histogram: Mapping[object, float] | Iterable[float]) -> float:
    """Shannon entropy over occupied categories, normalized to [0, 1].

    Zero-count categories are dropped (lim p->0 of p*log p is 0) and the
    normalizer log2(k) counts occupied categories only.  fsum keeps the
    result exactly invariant under category permutation.
    """
    nonzero = [c for c in _counts(histogram) if c > 0]
    if not nonzero:
        raise ValueError("histogram is empty (no positive counts)")
    k = len(nonzero)
    if k == 1:
        return 0.0
    total = math.fsum(nonzero)
    entropy = -math.fsum((c / total) * math.log2(c / total) for c in nonzero)
    value = entropy / math.log2(k)
    # guard float noise only; mathematically the ratio lies in [0, 1]
    return min(max(value, 0.0), 1.0)


def specialization(class_counts: Mapping[object, float] | Iterable[float]) -> float:
    """How spread one host's reports are across activity classes.

    0 means the host participates in exactly one class; 1 means its reports
    are uniform over the classes it touches.
    """
    counts = _counts(class_counts)
    occupied = sum(1 for c in counts if c > 0)
    if occupied > MAX_ACTIVITY_CLASSES:
        raise ValueError(
            f"at most {MAX_ACTIVITY_CLASSES} activity classes expected, got {occupied}")
    return normalized_entropy(counts)


def affinity(host_counts: Mapping[object, float] | Iterable[float]) -> float:
    """How spread one activity class is across hosts.

    1 means reports are uniformly distributed among the hosts carrying the
    activity; 0 means all reports concentrate on a single host.
    """
    return normalized_entropy(host_counts)


def stability(bin_counts: Mapping[object, float] | Iterable[float]) -> float:
    """How spread reports are across weekly time bins.

    0 marks a one-time offender (all reports in one bin); 1 an even spread
    over the occupied bins.
    """
    return normalized_entropy(bin_counts)


def av_score(positives: int, total: int) -> float:
    """Fraction of antivirus tools that flag the host, in [0, 1]."""
    if total <= 0:
        raise ValueError("total number of AV tools must be positive")
    if positives < 0:
        raise ValueError("positives must be non-negative")
    if positives > total:
        raise ValueError(f"positives {positives} exceeds total {total}")
    return positives / total


def geo_density(mal_ips: int, allocated_ips: int) -> float:
    """Malicious-to-allocated IP ratio for a country or AS."""
    if allocated_ips <= 0:
        raise ValueError("allocated_ips must be positive")
    if mal_ips < 0:
        raise ValueError("mal_ips must be non-negative")
    if mal_ips > allocated_ips:
        raise ValueError(f"mal_ips {mal_ips} exceeds allocated_ips {allocated_ips}")
    return mal_ips / allocated_ips
