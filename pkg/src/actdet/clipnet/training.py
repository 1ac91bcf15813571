"""SGD-with-momentum training loop for the clip classifier."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..motionenc import FLIP_LABELS, flip_array
from .model import ArchConfig, ModelParams, forward, init_params, loss_and_grads

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 10
    batch: int = 16
    seed: int = 0
    mode: str = "part_attention"
    flip_augment: bool = False


@dataclass
class ClipDataset:
    """Stacked clips ``(N, T, H, W, C)`` with integer labels into ``class_names``."""

    clips: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    channels: tuple[str, ...]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        self.channels = tuple(self.channels)
        if self.clips.ndim != 5 or len(self.clips) != len(self.labels):
            raise ValueError("clips must be (N, T, H, W, C) with one label each")

    def __len__(self) -> int:
        return len(self.labels)

    def select_channels(self, names: Sequence[str]) -> "ClipDataset":
        idx = [self.channels.index(n) for n in names]
        return ClipDataset(self.clips[..., idx], self.labels, self.class_names, tuple(names))

    def subset(self, idx) -> "ClipDataset":
        return ClipDataset(self.clips[idx], self.labels[idx], self.class_names, self.channels)


def _flip_map(class_names: Sequence[str]) -> dict[int, int]:
    ids = {n: i for i, n in enumerate(class_names)}
    return {ids[a]: ids[b] for a, b in FLIP_LABELS.items() if a in ids and b in ids}


def train(
    dataset: ClipDataset,
    config: TrainConfig | None = None,
    arch: ArchConfig | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Train from ``params`` (or a fresh seeded init) and return the model plus per-epoch metrics.

    With ``flip_augment`` each turn-class sample in a batch is mirrored with
    probability 0.5 and its label swapped.
    """
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if params is None:
        arch = arch or ArchConfig(in_channels=dataset.clips.shape[-1], n_classes=len(dataset.class_names))
        params = init_params(arch, seed=config.seed, class_names=dataset.class_names)
    params = params.astype(np.float32)
    params.class_names = tuple(dataset.class_names)
    velocity = {k: np.zeros_like(params.arrays[k]) for k in params.trainable}
    flips = _flip_map(dataset.class_names) if config.flip_augment else {}
    rng = np.random.default_rng(config.seed + 1)
    history = []

    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses, correct = [], 0
        for i in range(0, n, config.batch):
            idx = order[i : i + config.batch]
            x = dataset.clips[idx].astype(np.float32, copy=True)
            y = dataset.labels[idx].copy()
            coins = rng.random(len(idx))
            for j in range(len(idx)):
                if y[j] in flips and coins[j] < 0.5:
                    x[j] = flip_array(x[j], dataset.channels)
                    y[j] = flips[y[j]]
            loss, grads, p = loss_and_grads(x, y, params, config.mode, return_probs=True)
            for k in params.trainable:
                velocity[k] = config.momentum * velocity[k] - config.lr * grads[k]
                params.arrays[k] += velocity[k]
            losses.append(loss * len(idx))
            correct += int((p.argmax(axis=1) == y).sum())
        params.epoch = epoch + 1
        rec = {"epoch": epoch + 1, "loss": float(np.sum(losses) / n), "accuracy": correct / n}
        history.append(rec)
        log.info("epoch %d loss %.4f acc %.3f", rec["epoch"], rec["loss"], rec["accuracy"])
    return params, history


def predict(dataset: ClipDataset, params: ModelParams, mode: str, batch: int = 64) -> np.ndarray:
    """Softmax probabilities ``(N, n_classes)``."""
    out = []
    for i in range(0, len(dataset), batch):
        _, p = forward(dataset.clips[i : i + batch], params, mode)
        out.append(p)
    return np.concatenate(out)
