"""Synthetic worlds and contributor behaviours for desk-scale experiments.

A :class:`WorldSpec` fixes the classes (Gaussian, shared covariance), their
relevance tier, the class mix and label-string templates. Contributor
profiles then draw batches from that world:

``altruist``        few, mostly-correct samples of targeted/trojan families, complete names
``volume_spammer``  many ddos-heavy samples, mostly wrong labels, generic or meaningless names
``silent``          at most three correct samples
``copycat``         re-submits samples already submitted by someone else
``mislabeler``      genuine samples under a fixed permutation of the labels
``mixed``           whatever the profile's own accuracy and mixes say
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .families import CATEGORIES, CATEGORY_SHARES, FAMILIES
from .indicators import IndicatorBatch, LabeledSample, LabelSet, ReferenceDataset
from .metrics import COMPLETE, GENERIC, INCOMPLETE

KINDS = ("altruist", "volume_spammer", "silent", "copycat", "mislabeler", "mixed")
STRING_CLASSES = (COMPLETE, GENERIC, INCOMPLETE)

GENERIC_TEMPLATES = ("Trojan.Win32.Generic", "Trojan.Win32.ServStart", "Worm.Win32.AutoRun", "Generic.Bot")
INCOMPLETE_TEMPLATES = ("Suspicious.Cloud", "Malware.Unclassified", "unclassified", "Suspicious")
UNKNOWN_NAMES = ("trojan", "virus", "unclassified", "generic")


def stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def _check_distribution(probs, field_name):
    values = list(probs.values()) if isinstance(probs, Mapping) else list(probs)
    if not values or any(not math.isfinite(p) or p < 0 or p > 1 for p in values):
        raise ConfigError("probabilities must lie in [0, 1]", field_name)
    if abs(math.fsum(values) - 1.0) > 1e-9:
        raise ConfigError(f"probabilities must sum to 1, got {math.fsum(values)!r}", field_name)


@dataclass(frozen=True, eq=False)
class WorldSpec:
    labels: tuple[str, ...]
    categories: tuple[str, ...]
    means: np.ndarray
    covariance: np.ndarray
    proportions: np.ndarray
    templates: Mapping[str, Mapping[str, tuple[str, ...]]]

    def __post_init__(self):
        labels = tuple(self.labels)
        LabelSet(labels)
        means = np.atleast_2d(np.array(self.means, dtype=float))
        cov = np.atleast_2d(np.array(self.covariance, dtype=float))
        props = np.array(self.proportions, dtype=float).reshape(-1)
        lam = len(labels)
        if len(self.categories) != lam:
            raise ConfigError(f"{len(self.categories)} categories for {lam} labels", "world.categories")
        bad = [c for c in self.categories if c not in CATEGORIES]
        if bad:
            raise ConfigError(f"unknown categories {bad}", "world.categories")
        if means.shape[0] != lam:
            raise ConfigError(f"{means.shape[0]} mean vectors for {lam} labels", "world.means")
        d = means.shape[1]
        if cov.shape != (d, d):
            raise ConfigError(f"covariance shape {cov.shape}, expected {(d, d)}", "world.covariance")
        if not np.allclose(cov, cov.T):
            raise ConfigError("covariance must be symmetric", "world.covariance")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ConfigError("covariance must be positive-definite", "world.covariance") from None
        if props.shape != (lam,):
            raise ConfigError(f"{props.size} proportions for {lam} labels", "world.proportions")
        _check_distribution(props, "world.proportions")
        templates = {}
        for lab in labels:
            t = dict(self.templates.get(lab, {}))
            templates[lab] = {
                COMPLETE: tuple(t.get(COMPLETE, (lab,))),
                GENERIC: tuple(t.get(GENERIC, GENERIC_TEMPLATES)),
                INCOMPLETE: tuple(t.get(INCOMPLETE, INCOMPLETE_TEMPLATES)),
            }
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "proportions", props)
        object.__setattr__(self, "templates", templates)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def label_set(self) -> LabelSet:
        return LabelSet(self.labels)

    def label_categories(self) -> dict:
        return dict(zip(self.labels, self.categories))

    def draw(self, classes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((len(classes), self.dim))
        return self.means[classes] + z @ self._chol.T

    def class_probs(self, category_mix: Mapping[str, float] | None) -> np.ndarray:
        """Class distribution with category mass reassigned per ``category_mix``.

        Within a category the world's own proportions are kept; a category
        with no classes in this world is dropped and the rest renormalized.
        """
        if category_mix is None:
            return self.proportions
        cats = np.array(self.categories)
        probs = np.zeros(len(self.labels))
        for cat, mass in category_mix.items():
            members = cats == cat
            if not members.any() or mass == 0:
                continue
            within = self.proportions[members]
            within = within / within.sum() if within.sum() > 0 else np.full(within.size, 1 / within.size)
            probs[members] = mass * within
        if probs.sum() <= 0:
            return self.proportions
        return probs / probs.sum()

    def min_separation(self) -> float:
        """Smallest pairwise Mahalanobis distance between class means."""
        prec = np.linalg.inv(self.covariance)
        best = math.inf
        for a in range(len(self.labels)):
            for b in range(a + 1, len(self.labels)):
                diff = self.means[a] - self.means[b]
                best = min(best, math.sqrt(float(diff @ prec @ diff)))
        return best

    def to_dict(self) -> dict:
        return {
            "labels": [
                {"name": n, "category": c, "proportion": float(p)}
                for n, c, p in zip(self.labels, self.categories, self.proportions)
            ],
            "means": self.means.tolist(),
            "covariance": self.covariance.tolist(),
            "templates": {lab: {k: list(v) for k, v in t.items()} for lab, t in self.templates.items()},
        }


def default_covariance(dim: int, rho: float = 0.3) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def default_world(dim: int = 12, separation: float = 8.0) -> WorldSpec:
    """Eleven families of the reference study on scaled basis vectors.

    Means are rescaled so the closest pair sits exactly ``separation``
    Mahalanobis units apart.
    """
    lam = len(FAMILIES)
    if dim < lam:
        raise ConfigError(f"dim must be at least {lam}", "world.dim")
    cov = default_covariance(dim)
    means = np.eye(lam, dim)
    world = WorldSpec(
        labels=tuple(f.name for f in FAMILIES),
        categories=tuple(f.category for f in FAMILIES),
        means=means,
        covariance=cov,
        proportions=_table_proportions(),
        templates=_table_templates(),
    )
    scale = separation / world.min_separation()
    return WorldSpec(world.labels, world.categories, means * scale, cov, world.proportions, world.templates)


def _table_proportions() -> np.ndarray:
    totals = {}
    for f in FAMILIES:
        totals[f.category] = totals.get(f.category, 0) + f.count
    return np.array([CATEGORY_SHARES.get(f.category, 0.0) * f.count / totals[f.category] for f in FAMILIES])


def _table_templates() -> dict:
    out = {}
    for f in FAMILIES:
        complete = (f.name, f"Win32.{f.name}.A", f"Backdoor.Win32.{f.name}") + f.aliases
        out[f.name] = {COMPLETE: complete, GENERIC: GENERIC_TEMPLATES, INCOMPLETE: INCOMPLETE_TEMPLATES}
    return out


_PROFILE_DEFAULTS = {
    "altruist": dict(
        count=40, accuracy=0.97, string_mix=(1.0, 0.0, 0.0),
        category_mix={"targeted": 0.5, "trojan": 0.4, "ddos": 0.1},
    ),
    "volume_spammer": dict(
        count=500, accuracy=0.15, string_mix=(0.0, 0.6, 0.4),
        category_mix={"ddos": 0.9, "trojan": 0.05, "targeted": 0.05},
    ),
    "silent": dict(count=2, accuracy=1.0, string_mix=(1.0, 0.0, 0.0), category_mix=None),
    "copycat": dict(count=20, accuracy=1.0, string_mix=(1.0, 0.0, 0.0), category_mix=None),
    "mislabeler": dict(count=80, accuracy=0.0, string_mix=(1.0, 0.0, 0.0), category_mix=None),
    "mixed": dict(count=120, accuracy=0.7, string_mix=(0.5, 0.3, 0.2), category_mix=None),
}


@dataclass(frozen=True)
class ContributorProfile:
    """One contributor's behaviour; ``string_mix`` is (complete, generic, incomplete)."""

    contributor_id: str
    kind: str
    count: int
    accuracy: float
    string_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)
    category_mix: Mapping[str, float] | None = None
    copy_source: str | None = None

    def __post_init__(self):
        where = f"contributors[{self.contributor_id}]"
        if not self.contributor_id:
            raise ConfigError("contributor id must be non-empty", "contributors.id")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}", f"{where}.kind")
        if not isinstance(self.count, (int, np.integer)) or self.count < 0:
            raise ConfigError("count must be a non-negative integer", f"{where}.count")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError("accuracy must lie in [0, 1]", f"{where}.accuracy")
        object.__setattr__(self, "string_mix", tuple(float(p) for p in self.string_mix))
        if len(self.string_mix) != 3:
            raise ConfigError("string_mix needs complete, generic, incomplete shares", f"{where}.string_mix")
        _check_distribution(self.string_mix, f"{where}.string_mix")
        if self.category_mix is not None:
            bad = sorted(set(self.category_mix) - set(CATEGORIES))
            if bad:
                raise ConfigError(f"unknown categories {bad}", f"{where}.category_mix")
            _check_distribution(self.category_mix, f"{where}.category_mix")
        if self.kind == "altruist" and self.accuracy < 0.95:
            raise ConfigError("altruist accuracy must be >= 0.95", f"{where}.accuracy")
        if self.kind == "volume_spammer" and self.accuracy > 0.2:
            raise ConfigError("volume_spammer accuracy must be <= 0.2", f"{where}.accuracy")
        if self.kind == "silent" and self.count > 3:
            raise ConfigError("silent contributors submit at most 3 samples", f"{where}.count")

    @classmethod
    def default(cls, contributor_id: str, kind: str, **overrides) -> "ContributorProfile":
        if kind not in _PROFILE_DEFAULTS:
            raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}", f"contributors[{contributor_id}].kind")
        params = dict(_PROFILE_DEFAULTS[kind])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(contributor_id, kind, **params)


def contributor_rng(seed: int, contributor_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stable_int(contributor_id)]))


def gen_class_mix(world: WorldSpec, total: int, seed: int) -> tuple[int, ...]:
    """Multinomial per-class counts under the world's class proportions."""
    if total < len(world.labels):
        raise ValueError(f"total ({total}) must be at least the number of classes ({len(world.labels)})")
    rng = np.random.default_rng(seed)
    return tuple(int(c) for c in rng.multinomial(total, world.proportions))


def category_shares(world: WorldSpec, counts: Sequence[int]) -> dict:
    total = sum(counts)
    shares = {}
    for cat, c in zip(world.categories, counts):
        shares[cat] = shares.get(cat, 0) + c
    return {cat: n / total for cat, n in shares.items()}


def gen_reference(world: WorldSpec, per_class: int, seed: int) -> ReferenceDataset:
    if per_class < 2:
        raise ValueError("per_class must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence([seed, stable_int("reference")]))
    classes = np.repeat(np.arange(len(world.labels)), per_class)
    X = world.draw(classes, rng)
    samples = tuple(
        LabeledSample.create(x, world.labels[k], world.templates[world.labels[k]][COMPLETE][0])
        for x, k in zip(X, classes)
    )
    return ReferenceDataset(world.label_set, samples)


def _pick(rng, options):
    return options[int(rng.integers(len(options)))]


def _label_string(world, rng, declared, string_class):
    """A label string of the requested class; unknown family names cannot be complete."""
    if declared in world.templates:
        return _pick(rng, world.templates[declared][string_class])
    if string_class == COMPLETE:
        string_class = GENERIC
    return _pick(rng, GENERIC_TEMPLATES if string_class == GENERIC else INCOMPLETE_TEMPLATES)


def _derangement(rng, n):
    order = rng.permutation(n)
    perm = np.empty(n, dtype=int)
    perm[order] = np.roll(order, -1)
    return perm


def gen_contributor(profile: ContributorProfile, world: WorldSpec, prior_batches: Sequence[IndicatorBatch], seed: int) -> IndicatorBatch:
    rng = contributor_rng(seed, profile.contributor_id)
    if profile.kind == "copycat":
        return _gen_copycat(profile, prior_batches, rng)

    lam = len(world.labels)
    classes = rng.choice(lam, size=profile.count, p=world.class_probs(profile.category_mix))
    X = world.draw(classes, rng)
    string_classes = rng.choice(3, size=profile.count, p=profile.string_mix)
    perm = _derangement(rng, lam) if lam > 1 else np.zeros(1, dtype=int)

    samples = []
    for x, k, sc in zip(X, classes, string_classes):
        true_label = world.labels[k]
        if profile.kind == "mislabeler":
            declared = world.labels[perm[k]]
        elif profile.kind == "silent" or rng.random() < profile.accuracy:
            declared = true_label
        elif lam > 1 and rng.random() < 0.5:
            declared = world.labels[(k + 1 + int(rng.integers(lam - 1))) % lam]
        else:
            declared = _pick(rng, UNKNOWN_NAMES)
        label_string = _label_string(world, rng, declared, STRING_CLASSES[sc])
        samples.append(LabeledSample.create(x, declared, label_string))
    return IndicatorBatch(profile.contributor_id, tuple(samples))


def _gen_copycat(profile, prior_batches, rng):
    if profile.copy_source is not None:
        sources = [b for b in prior_batches if b.contributor_id == profile.copy_source]
        if not sources:
            raise ConfigError(
                f"copy source {profile.copy_source!r} not generated before this contributor",
                f"contributors[{profile.contributor_id}].copy_source",
            )
    else:
        sources = list(prior_batches)
    pool = [s for b in sources for s in b.unique().samples]
    if not pool:
        raise ConfigError("copycat needs non-empty prior batches", f"contributors[{profile.contributor_id}]")
    n = min(profile.count, len(pool))
    chosen = rng.choice(len(pool), size=n, replace=False)
    return IndicatorBatch(profile.contributor_id, tuple(pool[i] for i in sorted(chosen)))


@dataclass(frozen=True, eq=False)
class Scenario:
    world: WorldSpec
    profiles: tuple[ContributorProfile, ...]
    reference_per_class: int = 40

    def __post_init__(self):
        ids = [p.contributor_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ConfigError("contributor ids must be unique", "contributors")
        if self.reference_per_class < 2:
            raise ConfigError("must be at least 2", "reference_per_class")


def default_scenario() -> Scenario:
    """One of each behaviour plus three mixed contributors."""
    d = ContributorProfile.default
    profiles = (
        d("altruist", "altruist"),
        d("spammer", "volume_spammer"),
        d("copycat", "copycat", copy_source="altruist"),
        d("mislabeler", "mislabeler"),
        d("silent", "silent"),
        d("mixed-a", "mixed", count=120, accuracy=0.7),
        d("mixed-b", "mixed", count=150, accuracy=0.6),
        d("mixed-c", "mixed", count=90, accuracy=0.8),
    )
    return Scenario(default_world(), profiles)


def simulate(scenario: Scenario, seed: int) -> tuple[ReferenceDataset, list[IndicatorBatch]]:
    """Reference dataset plus one batch per profile, generated in listed order."""
    reference = gen_reference(scenario.world, scenario.reference_per_class, seed)
    batches: list[IndicatorBatch] = []
    for profile in scenario.profiles:
        batches.append(gen_contributor(profile, scenario.world, batches, seed))
    return reference, batches


def _world_from_dict(doc: Mapping) -> WorldSpec:
    if not isinstance(doc, Mapping):
        raise ConfigError("must be an object", "world")
    if "labels" not in doc:
        unknown = sorted(set(doc) - {"dim", "separation"})
        if unknown:
            raise ConfigError(f"unexpected keys {unknown}", "world")
        try:
            return default_world(int(doc.get("dim", 12)), float(doc.get("separation", 8.0)))
        except (TypeError, ValueError):
            raise ConfigError("dim and separation must be numbers", "world") from None
    try:
        entries = list(doc["labels"])
        labels = tuple(str(e["name"]) for e in entries)
        categories = tuple(str(e.get("category", "other")) for e in entries)
        props = [float(e["proportion"]) for e in entries]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"each label needs name and proportion ({exc})", "world.labels") from None
    for key in ("means", "covariance"):
        if key not in doc:
            raise ConfigError("required when labels are given", f"world.{key}")
    try:
        means = np.array(doc["means"], dtype=float)
        cov = np.array(doc["covariance"], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("must be numeric arrays", "world.means") from None
    return WorldSpec(labels, categories, means, cov, props, doc.get("templates", {}))


_PROFILE_KEYS = {"id", "kind", "count", "accuracy", "string_mix", "category_mix", "copy_source"}


def _profile_from_dict(n: int, doc: Mapping) -> ContributorProfile:
    where = f"contributors[{n}]"
    if not isinstance(doc, Mapping):
        raise ConfigError("must be an object", where)
    unknown = sorted(set(doc) - _PROFILE_KEYS)
    if unknown:
        raise ConfigError(f"unexpected keys {unknown}", where)
    for key in ("id", "kind"):
        if key not in doc:
            raise ConfigError("required", f"{where}.{key}")
    mix = doc.get("string_mix")
    if isinstance(mix, Mapping):
        mix = tuple(float(mix.get(c, 0.0)) for c in STRING_CLASSES)
    count = doc.get("count")
    if count is not None and (isinstance(count, bool) or not isinstance(count, int)):
        raise ConfigError("count must be a non-negative integer", f"{where}.count")
    return ContributorProfile.default(
        str(doc["id"]),
        str(doc["kind"]),
        count=count,
        accuracy=doc.get("accuracy"),
        string_mix=mix,
        category_mix=doc.get("category_mix"),
        copy_source=doc.get("copy_source"),
    )


def scenario_from_dict(doc: Mapping) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario must be a JSON object")
    unknown = sorted(set(doc) - {"world", "contributors", "reference_per_class"})
    if unknown:
        raise ConfigError(f"unexpected keys {unknown}", "scenario")
    world = _world_from_dict(doc.get("world", {}))
    if "contributors" not in doc:
        raise ConfigError("required", "contributors")
    if not isinstance(doc["contributors"], list) or not doc["contributors"]:
        raise ConfigError("must be a non-empty array", "contributors")
    profiles = tuple(_profile_from_dict(n, p) for n, p in enumerate(doc["contributors"]))
    per_class = doc.get("reference_per_class", 40)
    if isinstance(per_class, bool) or not isinstance(per_class, int):
        raise ConfigError("must be an integer", "reference_per_class")
    return Scenario(world, profiles, per_class)


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "world": scenario.world.to_dict(),
        "reference_per_class": scenario.reference_per_class,
        "contributors": [
            {
                "id": p.contributor_id,
                "kind": p.kind,
                "count": p.count,
                "accuracy": p.accuracy,
                "string_mix": dict(zip(STRING_CLASSES, p.string_mix)),
                "category_mix": None if p.category_mix is None else dict(p.category_mix),
                "copy_source": p.copy_source,
            }
            for p in scenario.profiles
        ],
    }


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON ({exc.msg} at line {exc.lineno})", "scenario") from None
    return scenario_from_dict(doc)
