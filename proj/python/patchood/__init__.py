"""Mahalanobis-distance OOD detection for patch-based segmentation."""

from ._core import (
    GaussianModel,
    PatchoodError,
    build_uncertainty_mask,
    detection_error,
    dice,
    esce,
    evaluate,
    fit,
    fit_gaussian,
    fpr_at_boundary,
    kl_uniform,
    load_model,
    mahalanobis,
    make_filter,
    make_grid,
    max_softmax,
    mc_dropout,
    read_npy,
    reduce_to_vector,
    save_model,
    score,
    synth,
    temp_scaled,
    tpr_boundary,
    write_npy,
)

__all__ = [
    "GaussianModel",
    "PatchoodError",
    "build_uncertainty_mask",
    "detection_error",
    "dice",
    "esce",
    "evaluate",
    "fit",
    "fit_gaussian",
    "fpr_at_boundary",
    "kl_uniform",
    "load_model",
    "mahalanobis",
    "make_filter",
    "make_grid",
    "max_softmax",
    "mc_dropout",
    "read_npy",
    "reduce_to_vector",
    "save_model",
    "score",
    "synth",
    "temp_scaled",
    "tpr_boundary",
    "write_npy",
]
