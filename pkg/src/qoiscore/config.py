"""Assessor configuration: JSON document, defaults, environment overrides.

Layout (every key optional)::

    {
      "classifier": {"mode": "lda", "ridge": 1e-6},
      "relevance": {"mode": "paper_exact", "gating": "correct_only",
                    "weights": {"ShadyRAT": 5, "Zeus": 3, "Avzhan": 1},
                    "category_weights": {"targeted": 5, "trojan": 3, "ddos": 1},
                    "label_categories": {"Zeus": "trojan"}},
      "utility": {"weights": {"complete": 5, "generic": 2, "incomplete": 1},
                  "keywords": {"incomplete": [...], "generic": [...]},
                  "precedence": ["incomplete", "generic"], "fallback": "complete"},
      "qoi_weights": {"correctness": 0.25, "relevance": 0.25, "utility": 0.25, "uniqueness": 0.25},
      "free_rider": {"volume_percentile": 50, "qoi_percentile": 25},
      "assessors": 1,
      "assessor_fraction": 0.8
    }

Environment variables ``QOI_<SECTION>__<KEY>`` override single keys, e.g.
``QOI_CLASSIFIER__MODE=euclidean`` or ``QOI_ASSESSORS=3``. Values are parsed
as JSON when possible and used as plain strings otherwise.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Mapping

from .classifier import DEFAULT_RIDGE, MODES
from .errors import ConfigError
from .families import label_categories
from .metrics import CATEGORY_WEIGHTS, QoIWeights, RelevanceWeights, UtilityWeights

ENV_PREFIX = "QOI_"


def default_relevance() -> RelevanceWeights:
    return RelevanceWeights.from_categories(label_categories())


@dataclass(frozen=True)
class AssessorConfig:
    mode: str = "lda"
    ridge: float = DEFAULT_RIDGE
    relevance: RelevanceWeights = field(default_factory=default_relevance)
    utility: UtilityWeights = field(default_factory=UtilityWeights)
    qoi_weights: QoIWeights = field(default_factory=QoIWeights)
    volume_percentile: float = 50.0
    qoi_percentile: float = 25.0
    assessors: int = 1
    assessor_fraction: float = 0.8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", "classifier.mode")
        if not self.ridge >= 0:
            raise ConfigError("must be non-negative", "classifier.ridge")
        for name in ("volume_percentile", "qoi_percentile"):
            if not 0 <= getattr(self, name) <= 100:
                raise ConfigError("must lie in [0, 100]", f"free_rider.{name}")
        if self.assessors < 1 or self.assessors % 2 == 0:
            raise ConfigError("must be a positive odd number", "assessors")
        if not 0 < self.assessor_fraction <= 1:
            raise ConfigError("must lie in (0, 1]", "assessor_fraction")


_SECTIONS = {
    "classifier": {"mode", "ridge"},
    "relevance": {"mode", "gating", "weights", "category_weights", "label_categories"},
    "utility": {"weights", "keywords", "precedence", "fallback"},
    "qoi_weights": {"correctness", "relevance", "utility", "uniqueness"},
    "free_rider": {"volume_percentile", "qoi_percentile"},
    "assessors": None,
    "assessor_fraction": None,
}


def _apply_env(doc: dict, env: Mapping[str, str]) -> dict:
    doc = copy.deepcopy(doc)
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        raw = env[name]
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if path[0] not in _SECTIONS:
            continue
        target = doc
        for part in path[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError("cannot override inside a non-object", name)
        target[path[-1]] = value
    return doc


def config_from_dict(doc: Mapping, env: Mapping[str, str] | None = None) -> AssessorConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    doc = _apply_env(dict(doc), env or {})
    for key, allowed in _SECTIONS.items():
        if key in doc and allowed is not None:
            if not isinstance(doc[key], Mapping):
                raise ConfigError("must be an object", key)
            extra = sorted(set(doc[key]) - allowed)
            if extra:
                raise ConfigError(f"unexpected keys {extra}", key)
    extra = sorted(set(doc) - set(_SECTIONS))
    if extra:
        raise ConfigError(f"unexpected keys {extra}", "config")

    cls = doc.get("classifier", {})
    rel = doc.get("relevance", {})
    util = doc.get("utility", {})
    fr = doc.get("free_rider", {})
    try:
        rel_kw = {k: rel[k] for k in ("mode", "gating") if k in rel}
        if "weights" in rel:
            relevance = RelevanceWeights(rel["weights"], **rel_kw)
        else:
            cats = rel.get("label_categories", label_categories())
            tiers = {**CATEGORY_WEIGHTS, **rel.get("category_weights", {})}
            relevance = RelevanceWeights.from_categories(cats, tiers, **rel_kw)
        util_kw = {k: util[k] for k in ("weights", "keywords", "fallback") if k in util}
        if "precedence" in util:
            util_kw["precedence"] = tuple(util["precedence"])
        utility = UtilityWeights(**util_kw)
        qoi = QoIWeights(**{k: float(v) for k, v in doc.get("qoi_weights", {}).items()})
        return AssessorConfig(
            mode=cls.get("mode", "lda"),
            ridge=float(cls.get("ridge", DEFAULT_RIDGE)),
            relevance=relevance,
            utility=utility,
            qoi_weights=qoi,
            volume_percentile=float(fr.get("volume_percentile", 50.0)),
            qoi_percentile=float(fr.get("qoi_percentile", 25.0)),
            assessors=int(doc.get("assessors", 1)),
            assessor_fraction=float(doc.get("assessor_fraction", 0.8)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, env: Mapping[str, str] | None = None) -> AssessorConfig:
    """Read a config file (defaults when ``path`` is None), then apply env overrides."""
    env = os.environ if env is None else env
    doc = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"not valid JSON ({exc.msg} at line {exc.lineno})", "config") from None
    return config_from_dict(doc, env)
