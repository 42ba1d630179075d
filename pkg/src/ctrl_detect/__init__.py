"""Label-error detection by clustering per-sample training-loss trajectories."""

from .cleaning import LabeledDataset, RetrainPolicy, dynamic_replace_schedule, prune, static_replace
from .clustering import ClusterResult, gmm, kmeans, select_noisy_clusters, silhouette
from .evaluation import ExperimentReport, GridConfig, balanced_accuracy, mask_accuracy, run_experiment_grid
from .exceptions import (
    EmptyDatasetError,
    NoValidMaskError,
    SchemaError,
    UndefinedAlignmentError,
    UndefinedSilhouetteError,
)
from .loss_matrix import LossMatrix, SubsampleStrategy, clamp_losses, last_loss, moving_average, preprocess, subsample
from .mask_engine import (
    STANDARD_GRID,
    DetectionParams,
    compute_mask,
    mask_score,
    select_best_mask,
    window_intervals,
)
from .noise_sim import flip_labels, gen_asymmetric, gen_symmetric, measure_noise_level, measure_sparsity
from .theory import (
    GaussianTwoClassConfig,
    TheoryRunResult,
    alignment,
    logistic_train,
    loss_gap_bound,
    sample_gaussian_dataset,
)

__version__ = "0.1.0"
