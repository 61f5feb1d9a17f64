"""Person-of-interest face and voice verification on feature streams.

The package learns per-modality embeddings with a contrastive objective,
scores test videos against a person's pristine reference set, and
calibrates the scores so a false-alarm target translates directly into a
decision threshold.  A synthetic world generator and a small CLI make the
whole pipeline reproducible end to end.
"""

from .encoder import EncoderConfig, EncoderParams, encode, encode_batch, init_encoder
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateReferenceError,
    PoifError,
    UndefinedMetricError,
)
from .losses import LossReport, contrastive_loss, positive_sets, total_loss
from .metrics import MetricsReport, ScoreSample, accuracy, auc, knn_person_id, pd_at_fa
from .records import EmbeddingPair, ManipFlags, Modality, SegmentRecord
from .scoring import (
    FUSED,
    DecisionPolicy,
    PoiIndices,
    ReferenceSet,
    VideoVerdict,
    build_reference,
    fuse,
    normalize_index,
    poi_index,
    quantile_threshold,
    score_video,
)
from .similarity import similarity, similarity_matrix, squared_distance
from .synthgen import (
    Benchmark,
    ManipulationSpec,
    NoiseSpec,
    WorldConfig,
    apply_manipulation,
    generate_benchmark,
    generate_world,
    inject_noise,
)
from .training import TrainConfig, TrainResult, sample_batch, train

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "ConfigError",
    "DataError",
    "DecisionPolicy",
    "DegenerateReferenceError",
    "EmbeddingPair",
    "EncoderConfig",
    "EncoderParams",
    "FUSED",
    "LossReport",
    "ManipFlags",
    "ManipulationSpec",
    "MetricsReport",
    "Modality",
    "NoiseSpec",
    "PoiIndices",
    "PoifError",
    "ReferenceSet",
    "ScoreSample",
    "SegmentRecord",
    "TrainConfig",
    "TrainResult",
    "UndefinedMetricError",
    "VideoVerdict",
    "WorldConfig",
    "accuracy",
    "apply_manipulation",
    "auc",
    "build_reference",
    "contrastive_loss",
    "encode",
    "encode_batch",
    "fuse",
    "generate_benchmark",
    "generate_world",
    "init_encoder",
    "inject_noise",
    "knn_person_id",
    "normalize_index",
    "pd_at_fa",
    "poi_index",
    "positive_sets",
    "quantile_threshold",
    "sample_batch",
    "score_video",
    "similarity",
    "similarity_matrix",
    "squared_distance",
    "total_loss",
    "train",
]
