"""Domain-adaptive metric learning with a dual triplet objective.

Train a small embedding net on a labeled source domain, then adapt it to an
unlabeled target domain: each batch, windows derived from the source
distance statistics pseudo-label target pair distances, and both domains
optimize a shared hinge objective.
"""

from .data import (
    CsvFormatError,
    Dataset,
    Sample,
    SynthConfig,
    dataset_from_arrays,
    gen_synthetic,
    load_feature_csv,
    load_truth_csv,
    save_feature_csv,
    save_truth_csv,
    split_by_identity,
)
from .estimators import DualTripletAdapter, PairVerifier, TripletEmbedder
from .evaluation import (
    EvalReport,
    Histogram,
    OuterClassifierConfig,
    classifier_scores,
    dissimilarity,
    evaluate_model,
    genuine_impostor_distances,
    pair_features,
    rank1_accuracy,
    roc_auc,
    tpr_at_far,
    train_outer_classifier,
    wcbc_histogram,
)
from .losses import (
    DualLossResult,
    LossConfig,
    batch_loss_and_grads,
    dual_loss,
    pairwise_distances,
    run_grad_check_suite,
    source_triplet_loss,
    target_triplet_loss,
)
from .mining import (
    DistanceStats,
    InsufficientStatsError,
    MiningWindows,
    PseudoLabeledPairs,
    WindowOverlapWarning,
    constitute_target_pairs,
    distance_stats,
    mining_windows,
    pseudo_label,
    split_wc_bc,
)
from .net import (
    DegenerateEmbeddingError,
    Gradients,
    MlpNet,
    NonFiniteError,
    SgdOptimizer,
    grad_check,
    load_model,
    model_from_dict,
    model_to_dict,
    model_to_json,
    save_model,
)
from .training import (
    AdaptResult,
    EpochDiagnostics,
    MisalignmentError,
    MisalignmentWarning,
    TrainConfig,
    TrainResult,
    adapt,
    make_source_batch,
    make_target_batch,
    mine_source_triplets,
    train_source,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptResult",
    "CsvFormatError",
    "Dataset",
    "DegenerateEmbeddingError",
    "DistanceStats",
    "DualLossResult",
    "DualTripletAdapter",
    "EpochDiagnostics",
    "EvalReport",
    "Gradients",
    "Histogram",
    "InsufficientStatsError",
    "LossConfig",
    "MiningWindows",
    "MisalignmentError",
    "MisalignmentWarning",
    "MlpNet",
    "NonFiniteError",
    "OuterClassifierConfig",
    "PairVerifier",
    "PseudoLabeledPairs",
    "Sample",
    "SgdOptimizer",
    "SynthConfig",
    "TrainConfig",
    "TrainResult",
    "TripletEmbedder",
    "WindowOverlapWarning",
    "adapt",
    "batch_loss_and_grads",
    "classifier_scores",
    "constitute_target_pairs",
    "dataset_from_arrays",
    "dissimilarity",
    "distance_stats",
    "dual_loss",
    "evaluate_model",
    "gen_synthetic",
    "genuine_impostor_distances",
    "grad_check",
    "load_feature_csv",
    "load_model",
    "load_truth_csv",
    "make_source_batch",
    "make_target_batch",
    "mine_source_triplets",
    "mining_windows",
    "model_from_dict",
    "model_to_dict",
    "model_to_json",
    "pair_features",
    "pairwise_distances",
    "pseudo_label",
    "rank1_accuracy",
    "roc_auc",
    "run_grad_check_suite",
    "save_feature_csv",
    "save_model",
    "save_truth_csv",
    "source_triplet_loss",
    "split_by_identity",
    "split_wc_bc",
    "target_triplet_loss",
    "tpr_at_far",
    "train_outer_classifier",
    "train_source",
    "wcbc_histogram",
]
