"""Daily stress recognition from phone logs, weather and personality traits."""

from .aggregate import (
    AssembleConfig,
    FeatureMatrix,
    StatSet,
    assemble,
    normalize_fit_transform,
    second_order,
    windowed,
)
from .entropy import CountDistribution, miller_madow, shannon_ml
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    PipelineConfig,
    SplitPlan,
    ablation_suite,
    cross_validate,
    make_split,
    metrics,
    ternary_evaluate,
)
from .features import DailyBasicFeatures, ReplyStats, extract_daily, label_stress
from .forest import Forest, ForestConfig, fit_forest, fit_tree, gini_impurity, predict
from .ingest import (
    ParseError,
    StreamPaths,
    SubjectDataset,
    filter_bluetooth,
    parse_logs,
    validate_coverage,
)
from .selection import RankedFeatures, SelectionConfig, rank_features, select_top
from .synth import CohortConfig, generate, ground_truth

__version__ = "0.1.0"
