"""CT + GCS outcome prediction: preprocessing, fusion model, evaluation and saliency."""

from ._core import (
    ConfigError,
    EmptyBrainError,
    Model,
    confusion_metrics,
    majority_vote,
    roc_auc,
    run_cli,
    simulate_phantom,
    standardize,
    strip_nonbrain,
    threshold_segment,
    tissue_statistics,
)

__all__ = [
    "ConfigError",
    "EmptyBrainError",
    "Model",
    "confusion_metrics",
    "majority_vote",
    "roc_auc",
    "run_cli",
    "simulate_phantom",
    "standardize",
    "strip_nonbrain",
    "threshold_segment",
    "tissue_statistics",
]
