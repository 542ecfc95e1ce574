"""Multi-sided fairness re-scoring for point-of-interest recommendation."""

__version__ = "0.1.0"

from .corpus import (CheckIn, Dataset, GroupAssignment, ItemGroup, Poi, SocialGraph, SplitDataset,
                     SyntheticConfig, UserGroup, assign_groups, chronological_split, dataset_stats,
                     filter_sparse, generate_synthetic, load_dataset, load_split)
from .errors import (CapabilityError, ConfigError, DataError, DegenerateDistributionError, EmptyDatasetError,
                     FairPoiError, FitError, ParseError, StageError, UnknownEntityError)
from .fairness import (ExposureFamily, ExposureModel, FairnessWeights, build_consumer_context,
                       build_popularity_histogram, consumer_score, fit_exposure, provider_score, rescore)
from .metrics import DEGENERATE_GCE, MetricsReport, ParetoPoint, evaluate, gce, pareto_front
from .recommenders import BaseModel, ModelKind, RecommendationList, score_candidates, top_k, train
from .stats import TestResult, kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank

__all__ = [
    "__version__",
    "CheckIn",
    "Dataset",
    "GroupAssignment",
    "ItemGroup",
    "Poi",
    "SocialGraph",
    "SplitDataset",
    "SyntheticConfig",
    "UserGroup",
    "assign_groups",
    "chronological_split",
    "dataset_stats",
    "filter_sparse",
    "generate_synthetic",
    "load_dataset",
    "load_split",
    "CapabilityError",
    "ConfigError",
    "DataError",
    "DegenerateDistributionError",
    "EmptyDatasetError",
    "FairPoiError",
    "FitError",
    "ParseError",
    "StageError",
    "UnknownEntityError",
    "ExposureFamily",
    "ExposureModel",
    "FairnessWeights",
    "build_consumer_context",
    "build_popularity_histogram",
    "consumer_score",
    "fit_exposure",
    "provider_score",
    "rescore",
    "DEGENERATE_GCE",
    "MetricsReport",
    "ParetoPoint",
    "evaluate",
    "gce",
    "pareto_front",
    "BaseModel",
    "ModelKind",
    "RecommendationList",
    "score_candidates",
    "top_k",
    "train",
    "TestResult",
    "kruskal_wallis",
    "mann_whitney_u",
    "wilcoxon_signed_rank",
]
