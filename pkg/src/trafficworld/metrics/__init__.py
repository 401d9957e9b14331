from .mmd import DEFAULT_BANDWIDTHS, SKIP, mmd2, scene_gen_mmd
from .features import (FEATURE_NAMES, INTERACTIVE, KINEMATIC, MAP_BASED,
                       FeatureTable, compute_features)
from .realism import (CATEGORIES, DEFAULT_BINS, RealismConfig,
                      component_likelihood, composite_realism, realism_suite)
from .displacement import displacement_metrics
from .planscore import (ComfortThresholds, RewardConfig, ScoreReport,
                        argmax_policy, estimate_value, nuplan_score, rl_score)

__all__ = [
    "mmd2", "scene_gen_mmd", "DEFAULT_BANDWIDTHS", "SKIP",
    "FEATURE_NAMES", "KINEMATIC", "INTERACTIVE", "MAP_BASED", "FeatureTable",
    "compute_features",
    "RealismConfig", "component_likelihood", "composite_realism",
    "realism_suite", "CATEGORIES", "DEFAULT_BINS",
    "displacement_metrics",
    "RewardConfig", "ComfortThresholds", "ScoreReport", "nuplan_score",
    "rl_score", "estimate_value", "argmax_policy",
]
