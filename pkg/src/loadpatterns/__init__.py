"""Residential load-pattern analytics.

Extracts representative daily load shapes from hourly smart-meter data with
K-Medoids clustering, finds the socioeconomic features most informative for
each pattern with an entropy-based filter, and maps household attributes to
a probability distribution over the patterns with a softmax-coupled ensemble
of per-pattern networks.
"""

from .baselines import (
    BoostedPatternModel,
    BoostedTreeRegressor,
    UnifiedPatternNetwork,
    compare_models,
    complement_subsets,
)
from .cluster import (
    KMedoids,
    PatternDistribution,
    PatternSet,
    distance,
    pattern_distribution,
    pattern_distributions,
    select_k,
    silhouette_coefficient,
    silhouette_samples,
)
from .featsel import (
    FeatureColumn,
    FeatureSubset,
    MeritSubsetSelector,
    discretize_column,
    entropy,
    merit,
    mutual_info,
    pearson_matrix,
    quantile_discretize,
    select_subset,
    symmetric_uncertainty,
)
from .ingest import (
    DayProfile,
    RawMeterSeries,
    SocioRecord,
    build_cohort,
    normalize_day,
    parse_meter,
    parse_survey,
    split_days,
)
from .neural import (
    PatternEnsemble,
    grid_search,
    pattern_rmse,
    predict_distribution,
    softmax,
    split_dataset,
)
from .pipeline import emit_report, run_pipeline
from .synthgen import GeneratorConfig, default_archetypes, generate

__version__ = "0.1.0"

__all__ = [
    "BoostedPatternModel",
    "BoostedTreeRegressor",
    "DayProfile",
    "FeatureColumn",
    "FeatureSubset",
    "GeneratorConfig",
    "KMedoids",
    "MeritSubsetSelector",
    "PatternDistribution",
    "PatternEnsemble",
    "PatternSet",
    "RawMeterSeries",
    "SocioRecord",
    "UnifiedPatternNetwork",
    "build_cohort",
    "compare_models",
    "complement_subsets",
    "default_archetypes",
    "discretize_column",
    "distance",
    "emit_report",
    "entropy",
    "generate",
    "grid_search",
    "merit",
    "mutual_info",
    "normalize_day",
    "parse_meter",
    "parse_survey",
    "pattern_distribution",
    "pattern_distributions",
    "pattern_rmse",
    "pearson_matrix",
    "predict_distribution",
    "quantile_discretize",
    "run_pipeline",
    "select_k",
    "select_subset",
    "silhouette_coefficient",
    "silhouette_samples",
    "softmax",
    "split_dataset",
    "split_days",
    "symmetric_uncertainty",
]
