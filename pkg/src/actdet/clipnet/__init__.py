"""Trainable clip classifier with a part-attention head."""
from .model import (
    MODES,
    ArchConfig,
    ModelParams,
    WindowScores,
    aggregate,
    classify_proposal,
    extract_features,
    forward,
    init_params,
    loss_and_grads,
    param_names,
    pool_scores,
    score_head,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .training import ClipDataset, TrainConfig, predict, train

__all__ = [
    "MODES",
    "ArchConfig",
    "ClipDataset",
    "ModelParams",
    "TrainConfig",
    "WindowScores",
    "aggregate",
    "classify_proposal",
    "extract_features",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss_and_grads",
    "param_names",
    "pool_scores",
    "predict",
    "save_checkpoint",
    "score_head",
    "train",
]
