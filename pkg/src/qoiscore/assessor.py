"""Community-level assessment: score every contributor, rank, flag, vote.

A free-riding candidate is a contributor who looks important by volume but
not by quality: volume percentile >= ``volume_percentile`` and QoI
percentile <= ``qoi_percentile``, where a percentile is the share of scored
contributors strictly below, times 100.
"""

from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import dataclass, replace
from typing import IO, Sequence

import numpy as np

from .classifier import ClassModel, predict_labels, train
from .config import AssessorConfig
from .errors import QoIError
from .indicators import IndicatorBatch, ReferenceDataset, validate_batch
from .metrics import (
    aggregate_qoi,
    build_key_index,
    classify_label_string,
    correctness,
    normalized_relevance,
    normalized_utility,
    relevance,
    uniqueness,
    utility,
)
from .synth import stable_int

logger = logging.getLogger(__name__)

REPORT_HEADER = ("contributor_id", "k", "C", "R", "U", "N", "QoI", "volume", "rank_qoi", "rank_volume", "free_rider")
BREAKDOWN_HEADER = (
    "contributor_id", "sample_key", "label", "label_string", "predicted_label",
    "s_c", "relevance_weight", "utility_type", "utility_weight", "s_n",
)


@dataclass(frozen=True)
class MetricBreakdown:
    keys: tuple
    predicted: tuple
    correctness_flags: tuple
    relevance_weights: tuple
    utility_types: tuple
    utility_weights: tuple
    uniqueness_flags: tuple
    correctness: float
    relevance: float
    utility: float
    uniqueness: float


@dataclass(frozen=True)
class ScoreReport:
    """Scores for one contributor.

    ``relevance`` and ``utility`` are the [0, 1] views that enter the QoI;
    ``relevance_raw`` / ``utility_raw`` follow the configured relevance mode
    and the raw utility weights. A contributor whose batch failed validation
    carries ``error`` and no scores.
    """

    contributor_id: str
    k: int
    correctness: float | None = None
    relevance: float | None = None
    utility: float | None = None
    uniqueness: float | None = None
    qoi: float | None = None
    volume: float = 0.0
    rank_qoi: int = 0
    rank_volume: int = 0
    free_rider: bool = False
    relevance_raw: float | None = None
    utility_raw: float | None = None
    breakdown: MetricBreakdown | None = None
    error: str | None = None
    warnings: tuple[str, ...] = ()

    @property
    def scored(self) -> bool:
        return self.error is None


def _percentile_below(values: Sequence[float], v: float) -> float:
    return 100.0 * sum(1 for x in values if x < v) / len(values)


def assign_ranks(reports: Sequence[ScoreReport]) -> list[ScoreReport]:
    """Dense 1..n ranks by descending score, ties by contributor id; unscored last by QoI."""
    by_qoi = sorted(reports, key=lambda r: (not r.scored, -(r.qoi or 0.0), r.contributor_id))
    by_volume = sorted(reports, key=lambda r: (-r.volume, r.contributor_id))
    q = {r.contributor_id: n for n, r in enumerate(by_qoi, start=1)}
    v = {r.contributor_id: n for n, r in enumerate(by_volume, start=1)}
    return [replace(r, rank_qoi=q[r.contributor_id], rank_volume=v[r.contributor_id]) for r in reports]


def rank_and_flag(reports: Sequence[ScoreReport], volume_percentile: float = 50.0, qoi_percentile: float = 25.0) -> list[ScoreReport]:
    if not reports:
        raise ValueError("no reports to rank")
    scored = [r for r in reports if r.scored]
    volumes = [r.volume for r in scored]
    qois = [r.qoi for r in scored]
    flagged = []
    for r in reports:
        flag = (
            r.scored
            and _percentile_below(volumes, r.volume) >= volume_percentile
            and _percentile_below(qois, r.qoi) <= qoi_percentile
        )
        flagged.append(replace(r, free_rider=bool(flag)))
    return assign_ranks(flagged)


def assess_with_model(model: ClassModel, batches: Sequence[IndicatorBatch], config: AssessorConfig) -> list[ScoreReport]:
    """Score a community against an already trained model.

    Reports come back sorted by contributor id. A batch that fails validation
    gets an error report and takes no part in uniqueness or volume.
    """
    if not batches:
        raise ValueError("community has no batches")
    ids = [b.contributor_id for b in batches]
    if len(set(ids)) != len(ids):
        raise ValueError("contributor ids must be unique")

    clean: list[IndicatorBatch] = []
    status: list[tuple] = []
    for b in batches:
        try:
            v = validate_batch(b, model.dim, model.label_set)
        except QoIError as exc:
            logger.warning("contributor %s rejected: %s", b.contributor_id, exc)
            clean.append(IndicatorBatch(b.contributor_id, ()))
            status.append((f"{exc.code}: {exc}", ()))
            continue
        clean.append(v.batch)
        status.append((None, v.warnings))
    max_k = max(len(b) for b in clean)
    if max_k == 0:
        raise ValueError("no contributor submitted a valid sample")

    rel_weights = config.relevance.restricted_to(model.label_set)
    key_index = build_key_index(clean)
    reports = []
    for i, (batch, (error, warnings)) in enumerate(zip(clean, status)):
        if error is not None:
            reports.append(ScoreReport(batch.contributor_id, 0, error=error))
            continue
        c = correctness(batch, model)
        r_raw = relevance(batch, rel_weights, c.per_sample)
        r = normalized_relevance(batch, rel_weights, c.per_sample)
        u_raw = utility(batch, config.utility)
        u = normalized_utility(batch, config.utility)
        n = uniqueness(clean, i, key_index)
        qoi = aggregate_qoi(c.value, r.value, u.value, n.value, config.qoi_weights)
        breakdown = MetricBreakdown(
            keys=tuple(s.key for s in batch.samples),
            predicted=tuple(predict_labels(model, batch.feature_matrix())),
            correctness_flags=c.per_sample,
            relevance_weights=r_raw.per_sample,
            utility_types=tuple(
                classify_label_string(s.label_string or s.declared_label, config.utility) for s in batch.samples
            ),
            utility_weights=u_raw.per_sample,
            uniqueness_flags=n.per_sample,
            correctness=c.value,
            relevance=r_raw.value,
            utility=u_raw.value,
            uniqueness=n.value,
        )
        reports.append(
            ScoreReport(
                contributor_id=batch.contributor_id,
                k=len(batch),
                correctness=c.value,
                relevance=r.value,
                utility=u.value,
                uniqueness=n.value,
                qoi=qoi,
                volume=len(batch) / max_k,
                relevance_raw=r_raw.value,
                utility_raw=u_raw.value,
                breakdown=breakdown,
                warnings=warnings,
            )
        )
    reports.sort(key=lambda rep: rep.contributor_id)
    return rank_and_flag(reports, config.volume_percentile, config.qoi_percentile)


def assessor_views(reference: ReferenceDataset, count: int, fraction: float, seed: int) -> list[ReferenceDataset]:
    """Reference datasets for ``count`` assessors.

    A single assessor holds the whole reference. Several assessors each hold a
    stratified random subsample so their verdicts can disagree.
    """
    if count == 1:
        return [reference]
    _, y = reference.arrays()
    views = []
    for a in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, stable_int("assessor"), a]))
        keep = []
        for k in range(len(reference.label_set)):
            idx = np.flatnonzero(y == k)
            n = max(2, int(round(fraction * idx.size)))
            keep.extend(rng.choice(idx, size=min(n, idx.size), replace=False).tolist())
        views.append(reference.subset(sorted(keep)))
    return views


def assess_community(reference: ReferenceDataset, batches: Sequence[IndicatorBatch], config: AssessorConfig, seed: int = 0) -> list[ScoreReport]:
    """Train, score and rank; with several assessors, combine by majority vote."""
    views = assessor_views(reference, config.assessors, config.assessor_fraction, seed)
    per_assessor = [assess_with_model(train(v, config.mode, config.ridge), batches, config) for v in views]
    if len(per_assessor) == 1:
        return per_assessor[0]
    return majority_vote(per_assessor)


def majority_vote(reports_per_assessor: Sequence[Sequence[ScoreReport]]) -> list[ScoreReport]:
    """Consensus across an odd number of assessors.

    Flags by majority, numeric scores by median, ranks recomputed. Per-sample
    breakdowns are taken from an assessor whose QoI equals the median.
    """
    n_assessors = len(reports_per_assessor)
    if n_assessors < 1 or n_assessors % 2 == 0:
        raise ValueError("majority vote needs an odd number of assessors")
    tables = [{r.contributor_id: r for r in reports} for reports in reports_per_assessor]
    ids = sorted(tables[0])
    for t in tables[1:]:
        if sorted(t) != ids:
            raise ValueError("assessors scored different contributor sets")

    consensus = []
    for cid in ids:
        votes = [t[cid] for t in tables]
        ok = [r for r in votes if r.scored]
        if len(ok) * 2 < n_assessors:
            consensus.append(replace(votes[0], free_rider=False))
            continue
        med = {}
        for name in ("correctness", "relevance", "utility", "uniqueness", "qoi", "relevance_raw", "utility_raw"):
            med[name] = statistics.median(getattr(r, name) for r in ok)
        chosen = next((r for r in ok if r.qoi == med["qoi"]), ok[0])
        consensus.append(
            replace(
                chosen,
                k=int(statistics.median(r.k for r in ok)),
                volume=statistics.median(r.volume for r in votes),
                free_rider=sum(r.free_rider for r in votes) * 2 > n_assessors,
                **med,
            )
        )
    return assign_ranks(consensus)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(reports: Sequence[ScoreReport], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in reports:
        writer.writerow(
            [_fmt(v) for v in (
                r.contributor_id, r.k, r.correctness, r.relevance, r.utility, r.uniqueness,
                r.qoi, r.volume, r.rank_qoi, r.rank_volume, r.free_rider,
            )]
        )


def write_breakdown_csv(reports: Sequence[ScoreReport], batches: Sequence[IndicatorBatch], out: IO[str]) -> None:
    by_id = {b.contributor_id: b.unique() for b in batches}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BREAKDOWN_HEADER)
    for r in reports:
        bd = r.breakdown
        if bd is None:
            continue
        samples = {s.key: s for s in by_id[r.contributor_id].samples}
        for j, key in enumerate(bd.keys):
            s = samples[key]
            writer.writerow([_fmt(v) for v in (
                r.contributor_id, key, s.declared_label, s.label_string, bd.predicted[j],
                bd.correctness_flags[j], bd.relevance_weights[j], bd.utility_types[j],
                bd.utility_weights[j], bd.uniqueness_flags[j],
            )])


def read_report_csv(stream) -> list[dict]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        return []
    missing = [h for h in REPORT_HEADER if h not in reader.fieldnames]
    if missing:
        raise ValueError(f"report is missing columns {missing}")
    return list(reader)
