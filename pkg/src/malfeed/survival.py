"""Kaplan-Meier survival estimation over host report-span durations.

A host's duration is the whole-week gap between its first and last report.
The duration is right-censored when the last report falls in the final
covered week of every source that ever reported the host: no feed kept
watching afterwards, so the true end is unknown.  The product-limit
estimator drops the survival curve at uncensored durations only; Greenwood's
formula supplies the variance and a symmetric normal-approximation band is
clipped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .churn import WEEK_SECONDS
from .enrich import Level, mapped_groups
from .ingest import ActivityClass, Report, ReportStore


@dataclass(frozen=True)
class DurationSample:
    """An observed duration in weeks; censored means the truth exceeds it."""

    duration: int
    censored: bool = False

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass(frozen=True)
class SurvivalStep:
    t: int
    survival: float
    ci_low: float
    ci_high: float
    at_risk: int
    deaths: int


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous non-increasing step function with confidence bounds.

    One step per distinct observed time (pure-censor times keep the current
    level with zero deaths); survival before the first step is 1.
    """

    steps: tuple[SurvivalStep, ...]
    confidence: float
    n_samples: int

    def survival_at(self, t: float) -> float:
        value = 1.0
        for step in self.steps:
            if step.t > t:
                break
            value = step.survival
        return value


class KaplanMeierEstimator(BaseEstimator):
    """Product-limit survival fitter.

    fit() takes either DurationSample objects or a duration sequence with an
    optional parallel censor-flag sequence; the fitted curve is ``curve_``.
    """

    def __init__(self, confidence: float = 0.95):
        self.confidence = confidence

    def fit(self, durations: Sequence[DurationSample] | Sequence[int],
            censored: Sequence[bool] | None = None) -> "KaplanMeierEstimator":
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        samples = _as_samples(durations, censored)
        if not samples:
            raise ValueError("cannot fit a survival curve to no samples")

        z = NormalDist().inv_cdf((1.0 + self.confidence) / 2.0)
        ordered = sorted(samples, key=lambda s: s.duration)
        n = len(ordered)

        steps: list[SurvivalStep] = []
        survival = 1.0
        greenwood = 0.0
        i = 0
        remaining = n
        while i < n:
            t = ordered[i].duration
            deaths = 0
            observed = 0
            while i < n and ordered[i].duration == t:
                observed += 1
                if not ordered[i].censored:
                    deaths += 1
                i += 1
            at_risk = remaining
            if deaths:
                if deaths == at_risk:
                    survival = 0.0
                else:
                    survival *= 1.0 - deaths / at_risk
                    greenwood += deaths / (at_risk * (at_risk - deaths))
            # Greenwood variance collapses to zero at the extremes
            if survival <= 0.0 or survival >= 1.0:
                se = 0.0
            else:
                se = survival * math.sqrt(greenwood)
            steps.append(SurvivalStep(
                t=t,
                survival=survival,
                ci_low=max(0.0, survival - z * se),
                ci_high=min(1.0, survival + z * se),
                at_risk=at_risk,
                deaths=deaths,
            ))
            remaining -= observed

        self.curve_ = SurvivalCurve(steps=tuple(steps), confidence=self.confidence,
                                    n_samples=n)
        return self

    def survival_at(self, t: float) -> float:
        if not hasattr(self, "curve_"):
            raise NotFittedError("KaplanMeierEstimator is not fitted yet")
        return self.curve_.survival_at(t)


def _as_samples(durations, censored) -> list[DurationSample]:
    items = list(durations)
    if items and isinstance(items[0], DurationSample):
        if censored is not None:
            raise ValueError("censored flags are embedded in DurationSample inputs")
        return items
    if censored is None:
        censored = [False] * len(items)
    if len(censored) != len(items):
        raise ValueError("durations and censored flags differ in length")
    return [DurationSample(int(d), bool(c)) for d, c in zip(items, censored)]


def km_estimate(samples: Sequence[DurationSample] | Sequence[int],
                confidence: float = 0.95,
                censored: Sequence[bool] | None = None) -> SurvivalCurve:
    """Fit and return the survival curve in one call."""
    return KaplanMeierEstimator(confidence=confidence).fit(samples, censored).curve_


def durations_from_store(store: ReportStore, level: Level,
                         end_of_window: Mapping[str, int] | None = None,
                         activity: ActivityClass | None = None) -> list[DurationSample]:
    """Per-host report-span durations with per-source-window censoring.

    ``end_of_window`` maps each feed source to its last covered timestamp;
    by default it is taken from the store itself.  A host is censored when
    its last report lies in the final covered week of every source that
    reported it.  Results are ordered by host label for determinism.
    """
    windows = dict(end_of_window) if end_of_window is not None else store.sources()
    final_week = {src: ts // WEEK_SECONDS for src, ts in windows.items()}

    samples: list[tuple[str, DurationSample]] = []
    for host, reports in mapped_groups(store, level).items():
        if activity is not None:
            reports = [r for r in reports if r.activity is activity]
            if not reports:
                continue
        weeks = [r.timestamp // WEEK_SECONDS for r in reports]
        first, last = min(weeks), max(weeks)
        sources = {r.source for r in reports}
        missing = sources.difference(final_week)
        if missing:
            raise ValueError(f"no observation window for source(s): {sorted(missing)}")
        censored = all(last == final_week[src] for src in sources)
        samples.append((host.label(), DurationSample(last - first, censored)))
    samples.sort(key=lambda pair: pair[0])
    return [s for _label, s in samples]


def km_by_class(store: ReportStore, activity: ActivityClass,
                confidence: float = 0.95, level: Level = Level.IP,
                end_of_window: Mapping[str, int] | None = None) -> SurvivalCurve:
    """Survival curve for hosts restricted to one activity class.

    Observation windows come from the whole store (source coverage is a feed
    property, not a class property) unless supplied explicitly.
    """
    windows = dict(end_of_window) if end_of_window is not None else store.sources()
    samples = durations_from_store(store, level, end_of_window=windows,
                                   activity=activity)
    return km_estimate(samples, confidence=confidence)
