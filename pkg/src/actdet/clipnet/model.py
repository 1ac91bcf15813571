"""Convolutional clip classifier with a part-attention scoring head.

The head turns feature maps into class score maps with a 1x1 convolution,
then combines a global-average score with two global-max scores taken over
the top and bottom halves of the score maps, using per-class weight vectors:
``s = l1 * s_gap + l2 * s_top + l3 * s_bottom`` where ``l1`` is fixed to ones
and ``l2``, ``l3`` start at zero and are learned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import layers

MODES = ("part_attention", "gap_only")


@dataclass
class ArchConfig:
    in_channels: int = 3
    n_classes: int = 6
    channels: tuple[int, ...] = (16, 32)
    kernel: tuple[int, int, int] = (3, 3, 3)
    strides: tuple[tuple[int, int, int], ...] = ((2, 2, 2), (1, 2, 2))

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.kernel = tuple(int(k) for k in self.kernel)
        self.strides = tuple(tuple(int(s) for s in st) for st in self.strides)
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ValueError("channels and strides must list one entry per conv layer")
        if any(k % 2 == 0 for k in self.kernel):
            raise ValueError("kernel sizes must be odd")

    @property
    def padding(self) -> tuple[int, int, int]:
        return tuple(k // 2 for k in self.kernel)

    @property
    def feature_channels(self) -> int:
        return self.channels[-1]

    def feature_shape(self, t: int, h: int, w: int) -> tuple[int, int, int, int]:
        for st in self.strides:
            t, h, w = (layers.conv_out_size(n, k, s, p) for n, k, s, p in zip((t, h, w), self.kernel, st, self.padding))
        return t, h, w, self.feature_channels

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "n_classes": self.n_classes,
            "channels": list(self.channels),
            "kernel": list(self.kernel),
            "strides": [list(s) for s in self.strides],
        }


@dataclass
class ModelParams:
    arch: ArchConfig
    arrays: dict[str, np.ndarray]
    seed: int = 0
    epoch: int = 0
    class_names: tuple[str, ...] = field(default_factory=tuple)

    # lambda1 is stored for inspection but is a constant, never trained
    FROZEN = ("lambda1",)

    @property
    def trainable(self) -> list[str]:
        return [k for k in self.arrays if k not in self.FROZEN]

    @property
    def dtype(self):
        return self.arrays["head.w"].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.arch, {k: v.astype(dtype) for k, v in self.arrays.items()}, self.seed, self.epoch, self.class_names
        )

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    def part_weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.arrays["lambda1"], self.arrays["lambda2"], self.arrays["lambda3"]


def param_names(arch: ArchConfig) -> list[str]:
    names = []
    for i in range(len(arch.channels)):
        names += [f"conv{i}.w", f"conv{i}.b"]
    return names + ["head.w", "head.b", "lambda1", "lambda2", "lambda3"]


def init_params(arch: ArchConfig, seed: int = 0, dtype=np.float64, class_names: Sequence[str] = ()) -> ModelParams:
    """He-normal conv and head weights, zero biases, part weights ones/zeros/zeros."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    cin = arch.in_channels
    fan_k = int(np.prod(arch.kernel))
    for i, cout in enumerate(arch.channels):
        arrays[f"conv{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / (fan_k * cin)), arch.kernel + (cin, cout))
        arrays[f"conv{i}.b"] = np.zeros(cout)
        cin = cout
    n = arch.n_classes
    arrays["head.w"] = rng.normal(0.0, np.sqrt(2.0 / cin), (cin, n))
    arrays["head.b"] = np.zeros(n)
    arrays["lambda1"] = np.ones(n)
    arrays["lambda2"] = np.zeros(n)
    arrays["lambda3"] = np.zeros(n)
    arrays = {k: v.astype(dtype) for k, v in arrays.items()}
    return ModelParams(arch, arrays, seed=seed, class_names=tuple(class_names))


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 4:
        return x[None], True
    if x.ndim != 5:
        raise ValueError(f"expected a (T, H, W, C) clip or a batch of them, got shape {x.shape}")
    return x, False


def _features(x, params: ModelParams, keep: list | None):
    arch = params.arch
    if x.shape[-1] != arch.in_channels:
        raise ValueError(f"clip has {x.shape[-1]} channels, model expects {arch.in_channels}")
    a = x.astype(params.dtype, copy=False)
    for i, st in enumerate(arch.strides):
        z, cache = layers.conv3d_forward(a, params.arrays[f"conv{i}.w"], params.arrays[f"conv{i}.b"], st, arch.padding)
        a = np.maximum(z, 0)
        if keep is not None:
            keep.append((cache, z > 0))
    return a


def extract_features(clip, params: ModelParams) -> np.ndarray:
    """Conv -> ReLU stack with no pooling after the last layer."""
    x, single = _batched(clip)
    f = _features(x, params, None)
    return f[0] if single else f


def score_head(F, params: ModelParams) -> np.ndarray:
    """1x1 convolution from feature channels to class score maps."""
    w = params.arrays["head.w"]
    if F.shape[-1] != w.shape[0]:
        raise ValueError(f"features have {F.shape[-1]} channels, head expects {w.shape[0]}")
    return F @ w + params.arrays["head.b"]


def pool_scores(S) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global average score and top/bottom global max scores of ``(..., T, H, W, N)`` maps."""
    S = np.asarray(S)
    h = S.shape[-3]
    if h < 2:
        raise ValueError("score maps need at least two rows to split")
    top = layers.split_rows(h)
    s1 = S.mean(axis=(-4, -3, -2))
    s2 = S[..., :top, :, :].max(axis=(-4, -3, -2))
    s3 = S[..., top:, :, :].max(axis=(-4, -3, -2))
    return s1, s2, s3


def aggregate(s1, s2, s3, lambdas) -> np.ndarray:
    l1, l2, l3 = lambdas
    n = np.shape(s1)[-1]
    if not (np.shape(s2)[-1] == np.shape(s3)[-1] == len(l1) == len(l2) == len(l3) == n):
        raise ValueError("score and weight vectors must all have length N")
    return l1 * s1 + l2 * s2 + l3 * s3


def forward(clip, params: ModelParams, mode: str = "part_attention") -> tuple[np.ndarray, np.ndarray]:
    """Class scores and softmax probabilities for one clip or a batch."""
    if mode not in MODES:
        raise ValueError(f"unknown head mode {mode!r}")
    x, single = _batched(clip)
    S = score_head(_features(x, params, None), params)
    s1, s2, s3 = pool_scores(S)
    s = s1 if mode == "gap_only" else aggregate(s1, s2, s3, params.part_weights())
    p = layers.softmax(s)
    return (s[0], p[0]) if single else (s, p)


def loss_and_grads(clips, labels, params: ModelParams, mode: str = "part_attention", return_probs: bool = False):
    """Mean softmax cross-entropy over the batch and its gradient for every trainable array.

    With ``return_probs`` the batch probabilities are returned as a third item.
    """
    if mode not in MODES:
        raise ValueError(f"unknown head mode {mode!r}")
    x, _ = _batched(clips)
    labels = np.atleast_1d(np.asarray(labels))
    n_cls = params.arch.n_classes
    if labels.shape[0] != x.shape[0]:
        raise ValueError("one label per clip required")
    if np.any(labels < 0) or np.any(labels >= n_cls):
        raise ValueError(f"labels must lie in [0, {n_cls})")
    A = params.arrays
    arch = params.arch

    keep: list = []
    F = _features(x, params, keep)
    S = score_head(F, params)
    B, T, H, W, N = S.shape
    top = slice(0, layers.split_rows(H))
    bottom = slice(layers.split_rows(H), H)
    s1 = S.mean(axis=(1, 2, 3))
    s2, i2 = layers.part_max(S, top)
    s3, i3 = layers.part_max(S, bottom)
    l1, l2, l3 = A["lambda1"], A["lambda2"], A["lambda3"]
    s = s1 if mode == "gap_only" else l1 * s1 + l2 * s2 + l3 * s3

    logp = layers.log_softmax(s)
    loss = -logp[np.arange(B), labels].mean()

    probs = np.exp(logp)
    ds = probs.copy()
    ds[np.arange(B), labels] -= 1.0
    ds /= B

    grads = {k: np.zeros_like(A[k]) for k in params.trainable}
    if mode == "gap_only":
        dS = np.broadcast_to(ds[:, None, None, None, :] / (T * H * W), S.shape).astype(S.dtype)
    else:
        grads["lambda2"] = (ds * s2).sum(axis=0)
        grads["lambda3"] = (ds * s3).sum(axis=0)
        dS = np.broadcast_to((ds * l1)[:, None, None, None, :] / (T * H * W), S.shape).astype(S.dtype)
        dS = dS + layers.part_max_backward(ds * l2, i2, S.shape, top, S.dtype)
        dS = dS + layers.part_max_backward(ds * l3, i3, S.shape, bottom, S.dtype)

    d2 = dS.reshape(-1, N)
    grads["head.w"] = F.reshape(-1, F.shape[-1]).T @ d2
    grads["head.b"] = d2.sum(axis=0)
    da = d2 @ A["head.w"].T
    da = da.reshape(F.shape)
    for i in reversed(range(len(arch.strides))):
        cache, active = keep[i]
        dz = da * active
        da, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = layers.conv3d_backward(
            dz, cache, A[f"conv{i}.w"], arch.strides[i], arch.padding, need_dx=i > 0
        )
    if return_probs:
        return float(loss), grads, probs
    return float(loss), grads


@dataclass
class WindowScores:
    t0: int
    t1: int
    probs: np.ndarray

    @property
    def frame_scores(self) -> np.ndarray:
        """The window confidence broadcast to each of its frames, ``(t1 - t0, N)``."""
        return np.broadcast_to(self.probs, (self.t1 - self.t0, self.probs.shape[-1])).copy()


def classify_proposal(
    windows: Sequence[tuple[int, int, np.ndarray]],
    params: ModelParams,
    mode: str = "part_attention",
    batch: int = 32,
) -> list[WindowScores]:
    """Softmax confidences for each ``(t0, t1, clip)`` window of a proposal."""
    out = []
    for i in range(0, len(windows), batch):
        chunk = windows[i : i + batch]
        _, p = forward(np.stack([c for _, _, c in chunk]), params, mode)
        out += [WindowScores(t0, t1, pi) for (t0, t1, _), pi in zip(chunk, p)]
    return out
