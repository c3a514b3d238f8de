"""Indicator domain types, record ingestion and canonical sample identity.

Samples travel as JSON lines, one record per line::

    {"contributor_id": "v1", "label": "Zeus", "label_string": "Trojan.Zbot",
     "features": [0.1, 2.0, -1.5], "sample_id": "..."}

``sample_id`` and ``label_string`` are optional. A missing ``sample_id`` is
replaced by :func:`derive_key`, a SHA-256 digest over the features only, so a
relabeled copy of someone else's sample still collides with the original.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, NewType, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, NonFiniteFeature, ParseError

SampleKey = NewType("SampleKey", str)

KEY_SEPARATOR = ","


@dataclass(frozen=True)
class LabelSet:
    """Ordered, duplicate-free label names. Position in ``labels`` is the class index."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("label set must not be empty")
        folded = [name.casefold() for name in labels]
        if len(set(folded)) != len(folded):
            dupes = sorted(n for n, c in Counter(folded).items() if c > 1)
            raise ValueError(f"duplicate label names: {dupes}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_lookup", {n: i for i, n in enumerate(folded)})

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, name):
        return self.find(name) is not None

    def find(self, name: str) -> int | None:
        """Case-folded lookup of a label's class index, ``None`` if absent."""
        return self._lookup.get(name.casefold())

    def index(self, name: str) -> int:
        idx = self.find(name)
        if idx is None:
            raise KeyError(name)
        return idx


def canonical_features(features: Iterable[float]) -> str:
    """Shortest round-trip decimal rendering of each value, comma-joined."""
    parts = []
    for value in features:
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteFeature(f"non-finite feature value {value!r}")
        parts.append(repr(value))
    return KEY_SEPARATOR.join(parts)


def derive_key(sample_or_features) -> SampleKey:
    """Content hash of a sample's feature vector; the label does not take part."""
    features = getattr(sample_or_features, "features", sample_or_features)
    payload = canonical_features(features).encode("utf-8")
    return SampleKey(hashlib.sha256(payload).hexdigest())


@dataclass(frozen=True)
class LabeledSample:
    key: SampleKey
    features: tuple[float, ...]
    declared_label: str
    label_string: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))

    @classmethod
    def create(cls, features, declared_label, label_string=None, key=None):
        """Build a sample, deriving its key from the features when none is given."""
        features = tuple(float(v) for v in features)
        if key is None:
            key = derive_key(features)
        return cls(SampleKey(key), features, declared_label, label_string)

    @property
    def dim(self) -> int:
        return len(self.features)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.features)


def _rank(sample):
    return (sample.declared_label, sample.label_string or "")


@dataclass(frozen=True)
class IndicatorBatch:
    """The samples one contributor submitted."""

    contributor_id: str
    samples: tuple[LabeledSample, ...] = ()

    def __post_init__(self):
        if not self.contributor_id:
            raise ValueError("contributor_id must be non-empty")
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    def unique(self) -> "IndicatorBatch":
        """Collapse repeated keys to one sample each.

        The survivor is the sample with the smallest (label, label string), so
        the result does not depend on submission order; it sits at the key's
        first position.
        """
        chosen: dict = {}
        for s in self.samples:
            cur = chosen.get(s.key)
            if cur is None or _rank(s) < _rank(cur):
                chosen[s.key] = s
        if len(chosen) == len(self.samples):
            return self
        return IndicatorBatch(self.contributor_id, tuple(chosen.values()))

    @property
    def keys(self) -> frozenset:
        return frozenset(s.key for s in self.samples)

    def feature_matrix(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 0))
        return np.array([s.features for s in self.samples], dtype=float)


@dataclass(frozen=True)
class ReferenceDataset:
    """Golden labeled samples; every declared label must belong to ``label_set``."""

    label_set: LabelSet
    samples: tuple[LabeledSample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValueError("reference dataset is empty")
        dim = samples[0].dim
        for n, s in enumerate(samples):
            if s.dim != dim:
                raise DimensionMismatch(f"reference sample {n} has {s.dim} features, expected {dim}")
            if not s.is_finite():
                raise NonFiniteFeature(f"reference sample {n} has non-finite features")
            if self.label_set.find(s.declared_label) is None:
                raise ValueError(f"reference sample {n} label {s.declared_label!r} not in label set")

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], labels: Sequence[str] | None = None):
        """Label set defaults to labels in order of first appearance."""
        if labels is None:
            labels = list(dict.fromkeys(s.declared_label for s in samples))
        return cls(LabelSet(tuple(labels)), tuple(samples))

    @property
    def dim(self) -> int:
        return self.samples[0].dim

    @property
    def counts(self) -> tuple[int, ...]:
        idx = Counter(self.label_set.index(s.declared_label) for s in self.samples)
        return tuple(idx.get(i, 0) for i in range(len(self.label_set)))

    def __len__(self):
        return len(self.samples)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix (r, d) and class-index vector (r,)."""
        X = np.array([s.features for s in self.samples], dtype=float)
        y = np.array([self.label_set.index(s.declared_label) for s in self.samples], dtype=int)
        return X, y

    def subset(self, indices) -> "ReferenceDataset":
        return ReferenceDataset(self.label_set, tuple(self.samples[i] for i in indices))


@dataclass(frozen=True)
class ValidatedBatch:
    batch: IndicatorBatch
    warnings: tuple[str, ...] = field(default=())
    duplicates_removed: int = 0


def validate_batch(batch: IndicatorBatch, model_dim: int, label_set: LabelSet | None = None) -> ValidatedBatch:
    """Check a batch against a model's feature dimension and collapse duplicate keys.

    Labels outside ``label_set`` are not errors; they are reported as warnings
    and later score zero relevance.
    """
    if not batch.samples:
        raise EmptyBatch(f"contributor {batch.contributor_id!r} submitted no samples")
    for n, s in enumerate(batch.samples):
        if s.dim != model_dim:
            raise DimensionMismatch(
                f"contributor {batch.contributor_id!r} sample {n} has {s.dim} features, model expects {model_dim}"
            )
        if not s.is_finite():
            raise NonFiniteFeature(f"contributor {batch.contributor_id!r} sample {n} has non-finite features")

    warnings = []
    deduped = batch.unique()
    removed = len(batch) - len(deduped)
    if removed:
        warnings.append(f"{removed} duplicate sample(s) collapsed")
    if label_set is not None:
        unknown = sorted({s.declared_label for s in deduped.samples if s.declared_label not in label_set})
        if unknown:
            warnings.append(f"labels outside label set (weight 0): {', '.join(unknown)}")
    return ValidatedBatch(deduped, tuple(warnings), removed)


def _parse_line(line: str, lineno: int, require_contributor: bool) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed record ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise ParseError("record must be a JSON object", lineno)

    contributor = rec.get("contributor_id")
    if require_contributor and (not isinstance(contributor, str) or not contributor):
        raise ParseError("missing or empty 'contributor_id'", lineno)
    label = rec.get("label")
    if not isinstance(label, str):
        raise ParseError("missing or non-string 'label'", lineno)
    for opt in ("sample_id", "label_string"):
        if rec.get(opt) is not None and not isinstance(rec[opt], str):
            raise ParseError(f"'{opt}' must be a string", lineno)
    features = rec.get("features")
    if not isinstance(features, list) or not features:
        raise ParseError("'features' must be a non-empty array", lineno)
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in features):
        raise ParseError("'features' must contain only numbers", lineno)
    if not all(math.isfinite(v) for v in features):
        raise ParseError("'features' contains a non-finite value", lineno)
    return rec


def _iter_records(stream, require_contributor):
    if isinstance(stream, str):
        stream = stream.splitlines()
    dim = None
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        rec = _parse_line(line, lineno, require_contributor)
        if dim is None:
            dim = len(rec["features"])
        elif len(rec["features"]) != dim:
            where = rec.get("sample_id") or rec.get("contributor_id") or "record"
            raise ParseError(
                f"dimension mismatch: {where} has {len(rec['features'])} features, expected {dim}", lineno
            )
        sample = LabeledSample.create(
            rec["features"], rec["label"], rec.get("label_string"), key=rec.get("sample_id")
        )
        yield rec.get("contributor_id"), sample


def parse_samples(stream) -> list[IndicatorBatch]:
    """Group line-delimited records into per-contributor batches.

    ``stream`` is any iterable of lines (an open file works) or a whole string.
    Contributors appear in order of first occurrence; sample order is kept.
    """
    grouped: dict[str, list[LabeledSample]] = {}
    for contributor, sample in _iter_records(stream, require_contributor=True):
        grouped.setdefault(contributor, []).append(sample)
    return [IndicatorBatch(cid, tuple(samples)) for cid, samples in grouped.items()]


def parse_reference(stream, labels: Sequence[str] | None = None) -> ReferenceDataset:
    """Read a reference dataset; ``contributor_id`` is ignored if present."""
    samples = [s for _, s in _iter_records(stream, require_contributor=False)]
    if not samples:
        raise ParseError("reference dataset is empty")
    try:
        return ReferenceDataset.from_samples(samples, labels)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def sample_record(contributor_id: str | None, sample: LabeledSample) -> dict:
    rec = {}
    if contributor_id is not None:
        rec["contributor_id"] = contributor_id
    rec["sample_id"] = sample.key
    rec["label"] = sample.declared_label
    if sample.label_string is not None:
        rec["label_string"] = sample.label_string
    rec["features"] = list(sample.features)
    return rec


def write_samples(batches: Iterable[IndicatorBatch], out: IO[str]) -> None:
    for batch in batches:
        for s in batch.samples:
            out.write(json.dumps(sample_record(batch.contributor_id, s)) + "\n")


def write_reference(reference: ReferenceDataset, out: IO[str], contributor_id: str = "reference") -> None:
    write_samples([IndicatorBatch(contributor_id, reference.samples)], out)


def write_batch_csv(batch: IndicatorBatch, out: IO[str]) -> None:
    dim = batch.samples[0].dim if batch.samples else 0
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["contributor_id", "sample_key", "label"] + [f"f{i}" for i in range(dim)])
    for s in batch.samples:
        writer.writerow([batch.contributor_id, s.key, s.declared_label] + [repr(v) for v in s.features])
