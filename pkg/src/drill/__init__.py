"""Semi-supervised regression via bucket distributions and decoupled distillation."""

from .augment import AugmentConfig, strong_augment, weak_augment
from .buckets import (
    BucketDistribution,
    BucketSpec,
    expectation,
    make_buckets,
    normalized_std,
    softmax,
    target_bucket,
)
from .data import FeatureScaler, SsrDataset, load_delimited, make_synthetic, select_labeled
from .losses import DdaBreakdown, dda_loss, kl_divergence, logit_alignment_loss, mae_loss
from .metrics import MetricReport, UndefinedMetricError, evaluate, r_squared, srcc
from .net import (
    Checkpoint,
    CheckpointFormatError,
    MlpModel,
    TrainingDivergenceError,
    forward,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .trainer import (
    VARIANTS,
    TrainConfig,
    TrainedPair,
    predict,
    pseudo_label,
    train_drill,
)

__version__ = "0.1.0"
