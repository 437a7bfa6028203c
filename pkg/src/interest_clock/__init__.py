"""Time-aware streaming recommendation at desk scale.

Two-stage retrieval over long behavior histories (clock-gap-aware scoring
and top-K search, then multi-head attention), a trainable CTR ranker with
exact hand-derived gradients, an hour-embedding baseline, a synthetic
circadian data generator, and an offline evaluation harness with a
prediction-smoothness probe.
"""

from .behavior_store import Behavior, BehaviorSequence, BehaviorStore
from .clock_esu import augment, esu_forward, fuse, head_attention, stable_softmax
from .clock_gsu import (
    SubSequence,
    gsu_score,
    select_top_k,
    select_top_k_full_sort,
    time_score,
    top_k,
)
from .config import RunConfig, load_config
from .errors import (
    DimensionError,
    OrderingError,
    StalenessError,
    UndefinedMetricError,
    ValidationError,
)
from .evaluation import (
    MetricReport,
    SmoothnessReport,
    auc,
    build_report,
    rela_impr,
    smoothness_probe,
    streaming_eval,
    uauc,
)
from .params import Dims, LicGrads, LicParams, load_checkpoint, save_checkpoint
from .projection_cache import (
    ProjectedBehavior,
    ProjectedQuery,
    ProjectionCache,
    Query,
    precompute_sequence,
    project_query,
)
from .ranker import Ranker, Sample, grad_check, loss, train_streaming
from .simgen import GeneratedData, StreamConfig, generate, oracle_auc
from .temporal import circular_gap, clock_of_day, time_features

__version__ = "0.1.0"

__all__ = [
    "Behavior", "BehaviorSequence", "BehaviorStore",
    "augment", "esu_forward", "fuse", "head_attention", "stable_softmax",
    "SubSequence", "gsu_score", "select_top_k", "select_top_k_full_sort",
    "time_score", "top_k",
    "RunConfig", "load_config",
    "DimensionError", "OrderingError", "StalenessError",
    "UndefinedMetricError", "ValidationError",
    "MetricReport", "SmoothnessReport", "auc", "build_report", "rela_impr",
    "smoothness_probe", "streaming_eval", "uauc",
    "Dims", "LicGrads", "LicParams", "load_checkpoint", "save_checkpoint",
    "ProjectedBehavior", "ProjectedQuery", "ProjectionCache", "Query",
    "precompute_sequence", "project_query",
    "Ranker", "Sample", "grad_check", "loss", "train_streaming",
    "GeneratedData", "StreamConfig", "generate", "oracle_auc",
    "circular_gap", "clock_of_day", "time_features",
    "__version__",
]
