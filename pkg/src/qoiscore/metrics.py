"""Correctness, relevance, utility and uniqueness of a contributor's batch.

Every metric scores the de-duplicated batch, so repeating a sample never
changes a score. Each operation returns the aggregate together with the
per-sample values it averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .classifier import ClassModel, predict_labels
from .errors import ConfigError, EmptyBatch, MissingFlags
from .indicators import IndicatorBatch, LabelSet

RELEVANCE_MODES = ("paper_exact", "mean_weight")
GATING_MODES = ("all_samples", "correct_only")

# tier weights for relevance
CATEGORY_WEIGHTS = {"targeted": 5.0, "trojan": 3.0, "ddos": 1.0, "other": 0.0}

COMPLETE, GENERIC, INCOMPLETE = "complete", "generic", "incomplete"
DEFAULT_UTILITY_WEIGHTS = {COMPLETE: 5.0, GENERIC: 2.0, INCOMPLETE: 1.0}
DEFAULT_KEYWORDS = {
    INCOMPLETE: ("suspicious", "malware", "unclassified"),
    GENERIC: ("generic", "worm", "trojan", "start", "run"),
}


def _require(batch: IndicatorBatch) -> IndicatorBatch:
    if not batch.samples:
        raise EmptyBatch(f"contributor {batch.contributor_id!r} has no samples")
    return batch.unique()


def _mean(values) -> float:
    return math.fsum(values) / len(values)


@dataclass(frozen=True)
class MetricResult:
    value: float
    per_sample: tuple


@dataclass(frozen=True)
class RelevanceWeights:
    """Per-label relevance weights; labels not listed weigh zero."""

    weights: Mapping[str, float]
    mode: str = "paper_exact"
    gating: str = "correct_only"

    def __post_init__(self):
        folded = {}
        for name, w in dict(self.weights).items():
            w = float(w)
            if not math.isfinite(w) or w < 0:
                raise ConfigError(f"weight for {name!r} must be finite and non-negative", "relevance.weights")
            folded[name.casefold()] = w
        if not any(w > 0 for w in folded.values()):
            raise ConfigError("at least one relevance weight must be positive", "relevance.weights")
        if self.mode not in RELEVANCE_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", "relevance.mode")
        if self.gating not in GATING_MODES:
            raise ConfigError(f"unknown gating {self.gating!r}", "relevance.gating")
        object.__setattr__(self, "weights", folded)

    @classmethod
    def from_categories(cls, label_categories: Mapping[str, str], category_weights=None, **kw):
        tiers = CATEGORY_WEIGHTS if category_weights is None else category_weights
        return cls({lab: tiers.get(cat, 0.0) for lab, cat in label_categories.items()}, **kw)

    def weight(self, label: str) -> float:
        return self.weights.get(label.casefold(), 0.0)

    def restricted_to(self, label_set: LabelSet) -> "RelevanceWeights":
        """Weights for exactly the labels of ``label_set`` (the normalizing denominator)."""
        return RelevanceWeights({lab: self.weight(lab) for lab in label_set}, self.mode, self.gating)

    @property
    def total(self) -> float:
        return math.fsum(self.weights.values())

    @property
    def max_weight(self) -> float:
        return max(self.weights.values())


@dataclass(frozen=True)
class UtilityWeights:
    """Label-string classes, their weights and the keyword rules that assign them.

    Rules are checked in ``precedence`` order by case-insensitive substring
    match; a string matching no rule gets ``fallback``.
    """

    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_UTILITY_WEIGHTS))
    keywords: Mapping[str, Sequence[str]] = field(default_factory=lambda: dict(DEFAULT_KEYWORDS))
    precedence: tuple[str, ...] = (INCOMPLETE, GENERIC)
    fallback: str = COMPLETE

    def __post_init__(self):
        weights = {k: float(v) for k, v in dict(self.weights).items()}
        for name, w in weights.items():
            if not math.isfinite(w) or w < 0:
                raise ConfigError(f"weight for {name!r} must be finite and non-negative", "utility.weights")
        keywords = {t: tuple(k.casefold() for k in kws) for t, kws in dict(self.keywords).items()}
        precedence = tuple(self.precedence)
        for t in (*precedence, self.fallback, *keywords):
            if t not in weights:
                raise ConfigError(f"utility type {t!r} has no weight", "utility.weights")
        if set(keywords) - set(precedence):
            raise ConfigError("every keyword type must appear in precedence", "utility.precedence")
        if not weights or max(weights.values()) <= 0:
            raise ConfigError("at least one utility weight must be positive", "utility.weights")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "keywords", keywords)
        object.__setattr__(self, "precedence", precedence)

    @property
    def max_weight(self) -> float:
        return max(self.weights.values())


@dataclass(frozen=True)
class QoIWeights:
    correctness: float = 0.25
    relevance: float = 0.25
    utility: float = 0.25
    uniqueness: float = 0.25

    def __post_init__(self):
        values = self.as_tuple()
        if any(not math.isfinite(w) or w < 0 for w in values):
            raise ConfigError("QoI weights must be finite and non-negative", "qoi_weights")
        if abs(math.fsum(values) - 1.0) > 1e-9:
            raise ConfigError(f"QoI weights must sum to 1, got {math.fsum(values)!r}", "qoi_weights")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.correctness, self.relevance, self.utility, self.uniqueness)


def correctness(batch: IndicatorBatch, model: ClassModel) -> MetricResult:
    """Share of samples whose declared label matches the model's prediction (case-folded)."""
    batch = _require(batch)
    predicted = predict_labels(model, batch.feature_matrix())
    flags = tuple(int(p.casefold() == s.declared_label.casefold()) for p, s in zip(predicted, batch.samples))
    return MetricResult(_mean(flags), flags)


def relevance(batch: IndicatorBatch, weights: RelevanceWeights, correctness_flags=None) -> MetricResult:
    """Summed label weights over the batch, normalized per ``weights.mode``.

    ``paper_exact`` divides by the sum of all label weights and can exceed 1;
    ``mean_weight`` divides by ``k * max weight``. Under ``correct_only``
    gating, samples with a zero correctness flag contribute nothing.
    """
    batch = _require(batch)
    per_sample = [weights.weight(s.declared_label) for s in batch.samples]
    if weights.gating == "correct_only":
        if correctness_flags is None:
            raise MissingFlags("correct_only gating needs per-sample correctness flags")
        if len(correctness_flags) != len(per_sample):
            raise MissingFlags(f"{len(correctness_flags)} flags for {len(per_sample)} samples")
        per_sample = [w if flag else 0.0 for w, flag in zip(per_sample, correctness_flags)]
    per_sample = tuple(per_sample)
    if weights.mode == "paper_exact":
        value = math.fsum(per_sample) / weights.total
    else:
        value = math.fsum(per_sample) / (len(per_sample) * weights.max_weight)
    return MetricResult(value, per_sample)


def normalized_relevance(batch: IndicatorBatch, weights: RelevanceWeights, correctness_flags=None) -> MetricResult:
    bounded = RelevanceWeights(weights.weights, "mean_weight", weights.gating)
    return relevance(batch, bounded, correctness_flags)


def classify_label_string(label_string: str | None, table: UtilityWeights) -> str:
    text = (label_string or "").casefold()
    for utype in table.precedence:
        if any(kw in text for kw in table.keywords.get(utype, ())):
            return utype
    return table.fallback


def utility(batch: IndicatorBatch, weights: UtilityWeights) -> MetricResult:
    """Mean utility weight of the samples' label-string classes.

    A sample without a label string is classed from its declared label.
    """
    batch = _require(batch)
    per_sample = tuple(
        weights.weights[classify_label_string(s.label_string or s.declared_label, weights)] for s in batch.samples
    )
    return MetricResult(_mean(per_sample), per_sample)


def normalized_utility(batch: IndicatorBatch, weights: UtilityWeights) -> MetricResult:
    raw = utility(batch, weights)
    top = weights.max_weight
    return MetricResult(raw.value / top, tuple(w / top for w in raw.per_sample))


def build_key_index(all_batches: Sequence[IndicatorBatch]) -> dict:
    """Map each sample key to the set of batch positions holding it."""
    index: dict = {}
    for pos, batch in enumerate(all_batches):
        for key in batch.keys:
            index.setdefault(key, set()).add(pos)
    return {k: frozenset(v) for k, v in index.items()}


def uniqueness(all_batches: Sequence[IndicatorBatch], i: int, key_index=None) -> MetricResult:
    """Share of batch ``i``'s samples that no other contributor submitted."""
    batch = _require(all_batches[i])
    if key_index is None:
        key_index = build_key_index(all_batches)
    flags = tuple(int(key_index.get(s.key, frozenset()) <= {i}) for s in batch.samples)
    return MetricResult(_mean(flags), flags)


def volume_score(all_batches: Sequence[IndicatorBatch], i: int) -> float:
    counts = [len(b.unique()) for b in all_batches]
    top = max(counts, default=0)
    if top == 0:
        raise EmptyBatch("community has no samples")
    return counts[i] / top


def aggregate_qoi(c: float, r: float, u: float, n: float, weights: QoIWeights) -> float:
    wc, wr, wu, wn = weights.as_tuple()
    if abs(math.fsum(weights.as_tuple()) - 1.0) > 1e-9:
        raise ConfigError("QoI weights must sum to 1", "qoi_weights")
    return wc * c + wr * r + wu * u + wn * n
