"""Weakly supervised MIL detection of visual corruptions in video.

The heavy lifting lives in the compiled `weakmil._core` extension; this
package re-exports its public surface.
"""

from weakmil._core import (  # noqa: F401
    CORRUPTION_KINDS,
    DESCRIPTOR_DIM,
    ConfigError,
    DataError,
    MilModel,
    NumericError,
    WeakmilError,
    attention_pool,
    extract_segment_features,
    extract_video_features,
    generate_dataset,
    inject,
    load_features,
    make_bags,
    patch_energies,
    ranking_hinge_loss,
    recall_at_fpr,
    render_base_video,
    resize_frame,
    roc_auc,
    run_energy_baseline,
    run_eval,
    run_features,
    run_train,
    run_tune,
    save_features,
    tune_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "CORRUPTION_KINDS",
    "DESCRIPTOR_DIM",
    "ConfigError",
    "DataError",
    "MilModel",
    "NumericError",
    "WeakmilError",
    "attention_pool",
    "extract_segment_features",
    "extract_video_features",
    "generate_dataset",
    "inject",
    "load_features",
    "make_bags",
    "patch_energies",
    "ranking_hinge_loss",
    "recall_at_fpr",
    "render_base_video",
    "resize_frame",
    "roc_auc",
    "run_energy_baseline",
    "run_eval",
    "run_features",
    "run_train",
    "run_tune",
    "save_features",
    "tune_threshold",
]
