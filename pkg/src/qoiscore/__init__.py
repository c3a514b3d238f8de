"""Quality-of-Indicators (QoI) scoring for threat-intelligence sharing communities.

Contributors are scored on the correctness, relevance, utility and uniqueness
of the labeled samples they share, instead of on how many they share.
"""

__version__ = "0.1.0"

from .assessor import ScoreReport, assess_community, majority_vote, rank_and_flag
from .classifier import (
    ClassModel,
    Prediction,
    mahalanobis_sq,
    misclassification_rate_analytic,
    misclassification_rate_empirical,
    predict,
    sample_from_model,
    train,
)
from .config import AssessorConfig, load_config
from .indicators import (
    IndicatorBatch,
    LabeledSample,
    LabelSet,
    ReferenceDataset,
    derive_key,
    parse_samples,
    validate_batch,
)
from .metrics import (
    QoIWeights,
    RelevanceWeights,
    UtilityWeights,
    aggregate_qoi,
    classify_label_string,
    correctness,
    relevance,
    uniqueness,
    utility,
    volume_score,
)
from .synth import ContributorProfile, Scenario, WorldSpec, default_scenario, default_world, simulate

__all__ = [
    "AssessorConfig", "ClassModel", "ContributorProfile", "IndicatorBatch", "LabelSet",
    "LabeledSample", "Prediction", "QoIWeights", "ReferenceDataset", "RelevanceWeights",
    "Scenario", "ScoreReport", "UtilityWeights", "WorldSpec", "aggregate_qoi",
    "assess_community", "classify_label_string", "correctness", "default_scenario",
    "default_world", "derive_key", "load_config", "mahalanobis_sq", "majority_vote",
    "misclassification_rate_analytic", "misclassification_rate_empirical", "parse_samples",
    "predict", "rank_and_flag", "relevance", "sample_from_model", "simulate", "train",
    "uniqueness", "utility", "validate_batch", "volume_score",
]
