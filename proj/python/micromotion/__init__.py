"""Pedestrian motion-state estimation from 2D pose tracks."""

from ._core import (
    Dataset,
    GaitConfig,
    MicromotionError,
    Model,
    TrainConfig,
    TrainResult,
    __version__,
    evaluate,
    generate_dataset,
    grad_check,
    infer_track,
    load_model,
    load_tracks,
    save_model,
    save_tracks,
    split_dataset,
    train,
)

__all__ = [
    "Dataset",
    "GaitConfig",
    "MicromotionError",
    "Model",
    "TrainConfig",
    "TrainResult",
    "__version__",
    "evaluate",
    "generate_dataset",
    "grad_check",
    "infer_track",
    "load_model",
    "load_tracks",
    "save_model",
    "save_tracks",
    "split_dataset",
    "train",
]
