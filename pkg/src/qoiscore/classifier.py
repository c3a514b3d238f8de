"""Nearest-centroid classification under a shared-covariance Gaussian model.

Two decision rules are supported:

* ``lda``: assign ``x`` to ``argmin_i (x - mu_i)' S^-1 (x - mu_i) - 2 ln(pi_i)``
  with ``S`` the pooled within-class covariance and ``pi_i`` the class priors.
* ``euclidean``: assign ``x`` to the centroid nearest in plain Euclidean
  distance; priors are ignored and the stored covariance is the identity.

Ties go to the lowest class index in both modes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateCentroids, DimensionMismatch, ParseError, SingularCovariance, TrainError
from .indicators import LabelSet, ReferenceDataset

MODES = ("lda", "euclidean")
DEFAULT_RIDGE = 1e-6
MODEL_FORMAT = "qoiscore.model/1"

_MC_CHUNK = 50_000


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance is not positive-definite") from None


def _precision_from_cholesky(chol: np.ndarray) -> np.ndarray:
    inv_l = np.linalg.solve(chol, np.eye(chol.shape[0]))
    prec = inv_l.T @ inv_l
    return (prec + prec.T) / 2.0


@dataclass(frozen=True, eq=False)
class ClassModel:
    """A trained classifier. Build with :func:`train` or :meth:`from_parameters`."""

    label_set: LabelSet
    centroids: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    cholesky: np.ndarray
    priors: np.ndarray
    mode: str = "lda"
    ridge: float = 0.0

    @classmethod
    def from_parameters(cls, labels, centroids, covariance, priors=None, mode="lda", ridge=0.0):
        """Assemble a model from explicit parameters.

        ``priors`` may be any non-negative weights; they are normalized. Equal
        priors are used when omitted.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        label_set = labels if isinstance(labels, LabelSet) else LabelSet(tuple(labels))
        mu = np.atleast_2d(np.array(centroids, dtype=float))
        lam, d = mu.shape
        if lam != len(label_set):
            raise ValueError(f"{lam} centroids for {len(label_set)} labels")
        cov = np.atleast_2d(np.array(covariance, dtype=float))
        if cov.shape != (d, d):
            raise DimensionMismatch(f"covariance shape {cov.shape}, expected {(d, d)}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(cov)):
            raise ValueError("model parameters must be finite")
        cov = (cov + cov.T) / 2.0
        if priors is None:
            priors = np.ones(lam)
        pi = np.array(priors, dtype=float).reshape(-1)
        if pi.shape != (lam,) or np.any(pi < 0) or not np.all(np.isfinite(pi)) or pi.sum() <= 0:
            raise ValueError("priors must be finite, non-negative, one per class, and not all zero")
        pi = pi / pi.sum()
        chol = _cholesky(cov)
        return cls(
            label_set=label_set,
            centroids=_frozen(mu),
            covariance=_frozen(cov),
            precision=_frozen(_precision_from_cholesky(chol)),
            cholesky=_frozen(chol),
            priors=_frozen(pi),
            mode=mode,
            ridge=float(ridge),
        )

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def n_classes(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "mode": self.mode,
            "ridge": self.ridge,
            "labels": list(self.label_set.labels),
            "dim": self.dim,
            "centroids": self.centroids.tolist(),
            "covariance": self.covariance.reshape(-1).tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassModel":
        try:
            if doc.get("format") != MODEL_FORMAT:
                raise ParseError(f"unsupported model format {doc.get('format')!r}")
            d = int(doc["dim"])
            cov = np.array(doc["covariance"], dtype=float).reshape(d, d)
            model = cls.from_parameters(
                doc["labels"], doc["centroids"], cov, doc["priors"], doc["mode"], doc["ridge"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid model document: {exc}") from None
        # from_parameters renormalizes; keep stored priors bit-exact
        object.__setattr__(model, "priors", _frozen(doc["priors"]))
        return model


def save_model(model: ClassModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> ClassModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model file is not valid JSON ({exc.msg})") from None
    return ClassModel.from_dict(doc)


def pooled_covariance(X: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Class means and within-class scatter divided by ``r - n_classes``."""
    d = X.shape[1]
    means = np.zeros((n_classes, d))
    scatter = np.zeros((d, d))
    for k in range(n_classes):
        Xk = X[y == k]
        means[k] = Xk.mean(axis=0)
        centered = Xk - means[k]
        scatter += centered.T @ centered
    return means, scatter / (X.shape[0] - n_classes)


def train(reference: ReferenceDataset, mode: str = "lda", ridge: float = DEFAULT_RIDGE) -> ClassModel:
    """Fit centroids, pooled covariance and empirical priors.

    The covariance is regularized by ``ridge * trace(S)/d * I``; when the
    trace is zero the scale falls back to 1 so any positive ridge still yields
    a positive-definite matrix.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if ridge < 0 or not math.isfinite(ridge):
        raise ValueError("ridge must be a finite non-negative number")
    labels = reference.label_set
    counts = np.array(reference.counts)
    small = [labels.labels[i] for i in np.flatnonzero(counts < 2)]
    if small:
        raise TrainError(f"classes with fewer than 2 samples: {small}")
    X, y = reference.arrays()
    r, d = X.shape
    lam = len(labels)
    if mode == "lda" and r <= lam:
        raise TrainError(f"need more samples ({r}) than classes ({lam}) to estimate covariance")

    means, cov = pooled_covariance(X, y, lam)
    priors = counts / counts.sum()
    if mode == "euclidean":
        cov = np.eye(d)
    else:
        tr = float(np.trace(cov))
        scale = tr / d if tr > 0 else 1.0
        cov = cov + ridge * scale * np.eye(d)
    return ClassModel.from_parameters(labels, means, cov, priors, mode, ridge)


def mahalanobis_sq(x, mu, precision) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    if x.shape != mu.shape or precision.shape != (x.size, x.size):
        raise DimensionMismatch(f"x {x.shape}, mu {mu.shape}, precision {precision.shape}")
    diff = x - mu
    if not diff.any():
        return 0.0
    return max(0.0, float(diff @ precision @ diff))


@dataclass(frozen=True)
class Prediction:
    predicted_label: str
    per_class_scores: tuple[float, ...]

    @property
    def class_index(self) -> int:
        return int(np.argmin(self.per_class_scores))


def discriminants(model: ClassModel, X) -> np.ndarray:
    """Per-class scores for each row of ``X`` (lower is closer), shape (n, classes)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"sample has {X.shape[1]} features, model expects {model.dim}")
    diff = X[:, None, :] - model.centroids[None, :, :]
    if model.mode == "euclidean":
        return np.einsum("nkd,nkd->nk", diff, diff)
    dist = np.einsum("nkd,de,nke->nk", diff, model.precision, diff)
    with np.errstate(divide="ignore"):
        return dist - 2.0 * np.log(model.priors)[None, :]


def predict_indices(model: ClassModel, X) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest class index on ties
    return np.argmin(discriminants(model, X), axis=1)


def predict(model: ClassModel, x) -> Prediction:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("predict takes a single feature vector")
    scores = discriminants(model, x[None, :])[0]
    return Prediction(model.label_set.labels[int(np.argmin(scores))], tuple(float(s) for s in scores))


def predict_labels(model: ClassModel, X) -> list[str]:
    if len(X) == 0:
        return []
    return [model.label_set.labels[i] for i in predict_indices(model, X)]


def std_normal_cdf(z: float) -> float:
    """Standard normal cdf via ``erfc``; absolute error is at double-precision level."""
    if z == math.inf:
        return 1.0
    if z == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def analytic_class_errors(model: ClassModel) -> np.ndarray:
    """Per-class error ``1 - Phi(min_i margin_ji)`` from the nearest pairwise LDA boundary.

    The margin to class ``i`` is ``(D^2 + 2 ln(pi_j / pi_i)) / (2 D)`` with
    ``D`` the Mahalanobis distance between the two centroids.
    """
    if model.mode != "lda":
        raise ValueError("analytic misclassification rate requires an lda-mode model")
    mu, pi = model.centroids, model.priors
    errors = np.zeros(model.n_classes)
    for j in range(model.n_classes):
        if pi[j] == 0:
            continue
        margin = math.inf
        for i in range(model.n_classes):
            if i == j or pi[i] == 0:
                continue
            dist_sq = mahalanobis_sq(mu[j], mu[i], model.precision)
            if dist_sq == 0:
                a, b = model.label_set.labels[j], model.label_set.labels[i]
                raise DegenerateCentroids(f"centroids of {a!r} and {b!r} coincide")
            dist = math.sqrt(dist_sq)
            margin = min(margin, (dist_sq + 2.0 * math.log(pi[j] / pi[i])) / (2.0 * dist))
        errors[j] = 1.0 - std_normal_cdf(margin)
    return errors


def misclassification_rate_analytic(model: ClassModel) -> float:
    """Prior-weighted sum of :func:`analytic_class_errors`.

    Exact for two classes. With three or more it ignores all but the nearest
    boundary of each class and so understates the error somewhat.
    """
    total = math.fsum(analytic_class_errors(model) * model.priors)
    return min(1.0, max(0.0, total))


def sample_from_model(model: ClassModel, class_index, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from N(mu_k, S) as ``mu_k + L z`` with ``L`` the Cholesky factor of ``S``.

    ``class_index`` is a 0-based class index, or an integer array giving one
    class per row (then ``size`` is ignored).
    """
    cls = np.asarray(class_index)
    if cls.ndim == 0:
        k = int(cls)
        if not 0 <= k < model.n_classes:
            raise IndexError(f"class index {k} out of range")
        n = 1 if size is None else size
        z = rng.standard_normal((n, model.dim))
        draws = model.centroids[k] + z @ model.cholesky.T
        return draws[0] if size is None else draws
    z = rng.standard_normal((cls.size, model.dim))
    return model.centroids[cls] + z @ model.cholesky.T


@dataclass(frozen=True)
class MonteCarloEstimate:
    rate: float
    std_error: float
    trials: int
    errors: int
    class_trials: tuple[int, ...] = ()
    class_errors: tuple[int, ...] = ()

    def within(self, value: float, n_sigma: float = 3.0) -> bool:
        return abs(self.rate - value) <= n_sigma * self.std_error

    def class_rates(self) -> tuple[float, ...]:
        return tuple(e / t if t else float("nan") for e, t in zip(self.class_errors, self.class_trials))


def binomial_std_error(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def misclassification_rate_empirical(model: ClassModel, trials: int, seed: int) -> MonteCarloEstimate:
    """Simulate the model's own generative law and count misassignments.

    The reported standard error uses the estimated rate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    classes = rng.choice(model.n_classes, size=trials, p=model.priors)
    wrong = np.zeros(model.n_classes, dtype=np.int64)
    for start in range(0, trials, _MC_CHUNK):
        chunk = classes[start : start + _MC_CHUNK]
        X = sample_from_model(model, chunk, rng)
        miss = predict_indices(model, X) != chunk
        wrong += np.bincount(chunk[miss], minlength=model.n_classes)
    errors = int(wrong.sum())
    rate = errors / trials
    return MonteCarloEstimate(
        rate,
        binomial_std_error(rate, trials),
        trials,
        errors,
        tuple(int(c) for c in np.bincount(classes, minlength=model.n_classes)),
        tuple(int(e) for e in wrong),
    )


def holdout_split(reference: ReferenceDataset, test_fraction: float = 0.1, seed: int = 0):
    """Stratified split that keeps at least two training samples per class."""
    rng = np.random.default_rng(seed)
    _, y = reference.arrays()
    train_idx, test_idx = [], []
    for k in range(len(reference.label_set)):
        idx = np.flatnonzero(y == k)
        rng.shuffle(idx)
        n_test = min(int(round(test_fraction * idx.size)), max(idx.size - 2, 0))
        test_idx.extend(idx[:n_test].tolist())
        train_idx.extend(idx[n_test:].tolist())
    return reference.subset(sorted(train_idx)), sorted(test_idx)


def accuracy(model: ClassModel, samples: Sequence) -> float:
    if not samples:
        return float("nan")
    X = np.array([s.features for s in samples], dtype=float)
    hits = sum(p.casefold() == s.declared_label.casefold() for p, s in zip(predict_labels(model, X), samples))
    return hits / len(samples)
