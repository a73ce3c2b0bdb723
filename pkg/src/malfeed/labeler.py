"""Activity-class labeling: feature encoding, stratified splitting, and a
soft-voting ensemble of pluggable probability learners.

A learner is anything exposing the scikit-learn triple ``fit(X, y)``,
``predict_proba(X)`` and ``classes_``; any sklearn classifier qualifies.  The
bundled reference learner is a deterministic depth-limited decision tree,
which keeps the persisted model a single self-describing JSON document.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Callable, IO, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .ingest import ActivityClass, Report

#: Fixed tie-break order for soft voting (declaration order of the taxonomy).
CLASS_ORDER: tuple[ActivityClass, ...] = tuple(ActivityClass)
_CLASS_INDEX = {a: i for i, a in enumerate(CLASS_ORDER)}

NUMERIC_FEATURES = ("day", "month", "year", "octet0", "octet1", "octet2",
                    "octet3", "asn")


@dataclass(frozen=True)
class Vocabulary:
    """Frozen one-hot dictionaries for the categorical report features."""

    countries: tuple[str, ...]
    organizations: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_country_index",
                           {c: i for i, c in enumerate(self.countries)})
        object.__setattr__(self, "_org_index",
                           {o: i for i, o in enumerate(self.organizations)})

    @classmethod
    def from_reports(cls, reports: Iterable[Report]) -> "Vocabulary":
        countries: set[str] = set()
        organizations: set[str] = set()
        for r in reports:
            if r.country is not None:
                countries.add(r.country)
            if r.organization is not None:
                organizations.add(r.organization)
        return cls(countries=tuple(sorted(countries)),
                   organizations=tuple(sorted(organizations)))

    def country_slot(self, country: str | None) -> int | None:
        if country is None:
            return None
        return self._country_index.get(country)  # type: ignore[attr-defined]

    def org_slot(self, organization: str | None) -> int | None:
        if organization is None:
            return None
        return self._org_index.get(organization)  # type: ignore[attr-defined]

    @property
    def width(self) -> int:
        return len(NUMERIC_FEATURES) + len(self.countries) + len(self.organizations)


def encode(report: Report, vocab: Vocabulary) -> np.ndarray:
    """Encode one report: calendar fields, IP octets, ASN, one-hot blocks.

    Unknown ASN encodes as 0; a country or organization outside the frozen
    vocabulary leaves its whole one-hot block zero.
    """
    tm = time.gmtime(report.timestamp)
    row = np.zeros(vocab.width, dtype=float)
    ip = report.ip
    row[0] = tm.tm_mday
    row[1] = tm.tm_mon
    row[2] = tm.tm_year
    row[3] = (ip >> 24) & 255
    row[4] = (ip >> 16) & 255
    row[5] = (ip >> 8) & 255
    row[6] = ip & 255
    row[7] = report.asn if report.asn is not None else 0
    base = len(NUMERIC_FEATURES)
    slot = vocab.country_slot(report.country)
    if slot is not None:
        row[base + slot] = 1.0
    slot = vocab.org_slot(report.organization)
    if slot is not None:
        row[base + len(vocab.countries) + slot] = 1.0
    return row


@dataclass(frozen=True, eq=False)
class LabeledExample:
    features: np.ndarray
    label: ActivityClass


class ReportFeatureEncoder(TransformerMixin, BaseEstimator):
    """Fit learns the one-hot vocabularies; transform emits the feature matrix."""

    def fit(self, reports: Iterable[Report], y=None) -> "ReportFeatureEncoder":
        self.vocabulary_ = Vocabulary.from_reports(reports)
        return self

    def transform(self, reports: Sequence[Report]) -> np.ndarray:
        self._check_fitted()
        vocab = self.vocabulary_
        if not reports:
            return np.zeros((0, vocab.width), dtype=float)
        return np.stack([encode(r, vocab) for r in reports])

    @classmethod
    def from_vocabulary(cls, vocab: Vocabulary) -> "ReportFeatureEncoder":
        enc = cls()
        enc.vocabulary_ = vocab
        return enc

    def feature_names(self) -> list[str]:
        self._check_fitted()
        names = list(NUMERIC_FEATURES)
        names += [f"country={c}" for c in self.vocabulary_.countries]
        names += [f"org={o}" for o in self.vocabulary_.organizations]
        return names

    def _check_fitted(self) -> None:
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError("ReportFeatureEncoder is not fitted yet")


def stratified_split(examples: Sequence, train_fraction: float, seed: int,
                     labels: Sequence | None = None) -> tuple[list, list]:
    """Per-class split: each class contributes ``train_fraction`` of itself.

    Deterministic for a given seed; train and test partition the input and
    each preserves the original element order.  ``labels`` defaults to the
    elements' ``label`` attribute.
    """
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    items = list(examples)
    if labels is None:
        labels = [e.label for e in items]
    if len(labels) != len(items):
        raise ValueError("labels and examples differ in length")
    if not items:
        raise ValueError("cannot split an empty example set")

    by_label: dict[object, list[int]] = {}
    for i, label in enumerate(labels):
        by_label.setdefault(label, []).append(i)

    def group_order(label: object):
        if isinstance(label, ActivityClass):
            return (0, _CLASS_INDEX[label])
        return (1, str(label))

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in sorted(by_label, key=group_order):
        idx = np.asarray(by_label[label])
        rng.shuffle(idx)
        n_train = int(round(train_fraction * idx.size))
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    train_idx.sort()
    test_idx.sort()
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


# ---------------------------------------------------------------------------
# Reference learner: deterministic depth-limited CART
# ---------------------------------------------------------------------------

class DecisionTreeLearner(BaseEstimator):
    """Greedy gini decision tree with a depth limit.

    Splits are deterministic: features are scanned in order and ties keep the
    first candidate, so identical training data always yields an identical
    tree.  Probability output is the class frequency at the reached leaf.
    """

    def __init__(self, max_depth: int = 12, min_samples_leaf: int = 1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y) -> "DecisionTreeLearner":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError("X must be a non-empty 2-d array aligned with y")
        self.classes_, codes = np.unique(y, return_inverse=True)
        self.tree_ = self._grow(X, codes, self.max_depth)
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "tree_"):
            raise NotFittedError("DecisionTreeLearner is not fitted yet")
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], len(self.classes_)), dtype=float)
        self._route(self.tree_, X, np.arange(X.shape[0]), out)
        return out

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    # -- growing ------------------------------------------------------------

    def _grow(self, X: np.ndarray, codes: np.ndarray, depth: int) -> dict:
        n_classes = len(self.classes_)
        counts = np.bincount(codes, minlength=n_classes).astype(float)
        total = counts.sum()
        leaf = {"leaf": (counts / total).tolist()}
        if depth <= 0 or total < 2 * self.min_samples_leaf or counts.max() == total:
            return leaf
        split = self._best_split(X, codes, counts)
        if split is None:
            return leaf
        feature, threshold = split
        mask = X[:, feature] <= threshold
        return {
            "feature": int(feature),
            "threshold": float(threshold),
            "left": self._grow(X[mask], codes[mask], depth - 1),
            "right": self._grow(X[~mask], codes[~mask], depth - 1),
        }

    def _best_split(self, X: np.ndarray, codes: np.ndarray,
                    counts: np.ndarray) -> tuple[int, float] | None:
        n, d = X.shape
        n_classes = counts.size
        parent_gini = 1.0 - ((counts / n) ** 2).sum()
        best_score = parent_gini - 1e-12
        best: tuple[int, float] | None = None
        msl = self.min_samples_leaf
        for f in range(d):
            v = X[:, f]
            order = np.argsort(v, kind="mergesort")
            vs = v[order]
            if vs[0] == vs[-1]:
                continue
            onehot = np.zeros((n, n_classes), dtype=float)
            onehot[np.arange(n), codes[order]] = 1.0
            cum = np.cumsum(onehot, axis=0)
            positions = np.nonzero(vs[1:] != vs[:-1])[0]
            positions = positions[(positions + 1 >= msl) & (n - positions - 1 >= msl)]
            if positions.size == 0:
                continue
            left = cum[positions]
            nl = (positions + 1).astype(float)
            right = counts - left
            nr = n - nl
            gini_left = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
            gini_right = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
            weighted = (nl * gini_left + nr * gini_right) / n
            j = int(np.argmin(weighted))
            if weighted[j] < best_score:
                best_score = float(weighted[j])
                best = (f, float((vs[positions[j]] + vs[positions[j] + 1]) / 2.0))
        return best

    def _route(self, node: dict, X: np.ndarray, idx: np.ndarray,
               out: np.ndarray) -> None:
        if "leaf" in node:
            out[idx] = node["leaf"]
            return
        mask = X[idx, node["feature"]] <= node["threshold"]
        self._route(node["left"], X, idx[mask], out)
        self._route(node["right"], X, idx[~mask], out)

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        if not hasattr(self, "tree_"):
            raise NotFittedError("DecisionTreeLearner is not fitted yet")
        return {
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "classes": self.classes_.tolist(),
            "tree": self.tree_,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DecisionTreeLearner":
        learner = cls(max_depth=payload["max_depth"],
                      min_samples_leaf=payload["min_samples_leaf"])
        learner.classes_ = np.asarray(payload["classes"])
        learner.tree_ = payload["tree"]
        return learner


# ---------------------------------------------------------------------------
# Soft-voting ensemble
# ---------------------------------------------------------------------------

class SoftVotingEnsemble(ClassifierMixin, BaseEstimator):
    """Average the members' per-class probabilities and take the argmax.

    Members are trained on seeded bootstrap resamples of the training set
    (``bootstrap=False`` trains every member on the full set, which makes a
    deterministic learner produce identical members).  Exact probability ties
    resolve to the earliest class in the fixed taxonomy order.
    """

    def __init__(self, learner_factory: Callable[[], object] | None = None,
                 n_members: int = 5, random_state: int = 0,
                 bootstrap: bool = True):
        self.learner_factory = learner_factory
        self.n_members = n_members
        self.random_state = random_state
        self.bootstrap = bootstrap

    def fit(self, X, y) -> "SoftVotingEnsemble":
        if self.n_members < 1:
            raise ValueError("an ensemble needs at least one member")
        X = np.asarray(X, dtype=float)
        labels = list(y)
        if X.ndim != 2 or X.shape[0] != len(labels) or not labels:
            raise ValueError("X must be a non-empty 2-d array aligned with y")
        present = sorted(set(labels), key=lambda a: _CLASS_INDEX[a])
        self.classes_ = tuple(present)
        code_of = {a: i for i, a in enumerate(present)}
        codes = np.asarray([code_of[a] for a in labels])

        factory = self.learner_factory or DecisionTreeLearner
        rng = np.random.default_rng(self.random_state)
        members = []
        n = X.shape[0]
        for m in range(self.n_members):
            if self.bootstrap:
                idx = rng.integers(0, n, size=n)
                Xm, ym = X[idx], codes[idx]
            else:
                Xm, ym = X, codes
            learner = factory()
            try:
                learner.fit(Xm, ym)
            except Exception as exc:
                raise RuntimeError(f"ensemble member {m} failed to train: {exc}") from exc
            members.append(learner)
        self.members_ = tuple(members)
        return self

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        total = np.zeros((X.shape[0], len(self.classes_)), dtype=float)
        for learner in self.members_:
            proba = np.asarray(learner.predict_proba(X), dtype=float)
            columns = np.asarray(learner.classes_, dtype=int)
            total[:, columns] += proba
        return total / len(self.members_)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        picks = np.argmax(proba, axis=1)  # first maximum: fixed class order
        return np.asarray([self.classes_[i] for i in picks], dtype=object)

    def _check_fitted(self) -> None:
        if not hasattr(self, "members_"):
            raise NotFittedError("SoftVotingEnsemble is not fitted yet")


def soft_vote(ensemble: SoftVotingEnsemble,
              features: np.ndarray) -> tuple[ActivityClass, float]:
    """Label one feature vector: (argmax class, its averaged probability)."""
    proba = ensemble.predict_proba(np.asarray(features, dtype=float).reshape(1, -1))[0]
    i = int(np.argmax(proba))
    return ensemble.classes_[i], float(proba[i])


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def per_class_accuracy(y_true: Sequence[ActivityClass],
                       y_pred: Sequence[ActivityClass]) -> dict[ActivityClass, float]:
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    hits: dict[ActivityClass, int] = {}
    totals: dict[ActivityClass, int] = {}
    for truth, pred in zip(y_true, y_pred):
        totals[truth] = totals.get(truth, 0) + 1
        if truth is pred:
            hits[truth] = hits.get(truth, 0) + 1
    return {a: hits.get(a, 0) / n for a, n in totals.items()}


def weighted_accuracy(per_class_acc: Mapping[object, float],
                      class_counts: Mapping[object, int]) -> float:
    """Class accuracies averaged with class-size weights."""
    if set(per_class_acc) != set(class_counts):
        raise ValueError("accuracy and count tables must cover the same classes")
    if not per_class_acc:
        raise ValueError("no classes to average over")
    if any(n <= 0 for n in class_counts.values()):
        raise ValueError("class counts must be positive")
    total = sum(class_counts.values())
    return math.fsum(per_class_acc[c] * class_counts[c] for c in per_class_acc) / total


# ---------------------------------------------------------------------------
# Persistence: one self-describing JSON document
# ---------------------------------------------------------------------------

MODEL_FORMAT = "malfeed-ensemble"
MODEL_VERSION = 1


def save_model(out: IO[str] | str, ensemble: SoftVotingEnsemble,
               encoder: ReportFeatureEncoder) -> None:
    """Persist vocabularies, class order and the members' trees as JSON.

    Only the reference tree learner serializes; plug-in learners bring their
    own persistence.
    """
    ensemble._check_fitted()
    encoder._check_fitted()
    for learner in ensemble.members_:
        if not isinstance(learner, DecisionTreeLearner):
            raise TypeError(
                f"cannot serialize member of type {type(learner).__name__}; "
                "only DecisionTreeLearner models persist to JSON")
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": [a.value for a in ensemble.classes_],
        "n_members": ensemble.n_members,
        "random_state": ensemble.random_state,
        "bootstrap": ensemble.bootstrap,
        "vocabulary": {
            "countries": list(encoder.vocabulary_.countries),
            "organizations": list(encoder.vocabulary_.organizations),
        },
        "members": [learner.to_dict() for learner in ensemble.members_],
    }
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(payload, out, sort_keys=True)
        out.write("\n")


def load_model(source: IO[str] | str) -> tuple[SoftVotingEnsemble, ReportFeatureEncoder]:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    else:
        payload = json.load(source)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError("not a malfeed ensemble model document")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')!r}")

    vocab = Vocabulary(countries=tuple(payload["vocabulary"]["countries"]),
                       organizations=tuple(payload["vocabulary"]["organizations"]))
    encoder = ReportFeatureEncoder.from_vocabulary(vocab)

    ensemble = SoftVotingEnsemble(n_members=payload["n_members"],
                                  random_state=payload["random_state"],
                                  bootstrap=payload["bootstrap"])
    ensemble.classes_ = tuple(ActivityClass(v) for v in payload["classes"])
    ensemble.members_ = tuple(DecisionTreeLearner.from_dict(m)
                              for m in payload["members"])
    return ensemble, encoder
