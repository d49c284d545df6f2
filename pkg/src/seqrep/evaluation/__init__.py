"""Validation protocol: windows, metrics, probes, and change-point tools."""

from .cpd import (
    MIN_SEGMENT,
    ChangePointResult,
    cosine_distance,
    detect_change_point,
    detection_accuracy,
    detection_delay,
    normalize_matrix,
    pair_distance_curve,
)
from .heads import MetricReport, MlpProbe, ProbeConfig, fit_probe, n_threads, run_seeds
from .metrics import (
    accuracy,
    classification_metrics,
    pr_auc,
    pr_auc_ovr,
    roc_auc,
    roc_auc_ovr,
)
from .protocol import (
    FrozenModel,
    eval_from_matrices,
    eval_global,
    eval_local_binary,
    eval_next_mcc,
    global_embeddings,
    local_window_dataset,
    next_code_dataset,
)
from .windows import (
    DEFAULT_STRIDE,
    DEFAULT_WINDOW,
    WindowEmbeddings,
    sliding_window_embed,
    sliding_window_embed_many,
    window_ends,
    window_index,
)

__all__ = [
    "DEFAULT_STRIDE",
    "DEFAULT_WINDOW",
    "MIN_SEGMENT",
    "ChangePointResult",
    "FrozenModel",
    "MetricReport",
    "MlpProbe",
    "ProbeConfig",
    "WindowEmbeddings",
    "accuracy",
    "classification_metrics",
    "cosine_distance",
    "detect_change_point",
    "detection_accuracy",
    "detection_delay",
    "eval_from_matrices",
    "eval_global",
    "eval_local_binary",
    "eval_next_mcc",
    "fit_probe",
    "global_embeddings",
    "local_window_dataset",
    "n_threads",
    "next_code_dataset",
    "normalize_matrix",
    "pair_distance_curve",
    "pr_auc",
    "pr_auc_ovr",
    "roc_auc",
    "roc_auc_ovr",
    "run_seeds",
    "sliding_window_embed",
    "sliding_window_embed_many",
    "window_ends",
    "window_index",
]
