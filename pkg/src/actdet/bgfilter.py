"""Per-pixel Gaussian-mixture background model and static-proposal filtering.

Intensities are single-channel on a 0..255 scale; color frames are reduced by
averaging channels (see :func:`to_intensity`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .tracklet import BBox, Proposal


@dataclass
class BGConfig:
    k: int = 4
    alpha: float = 0.005
    match_sigma: float = 3.0
    c_bg: float = 0.9
    w0: float = 0.05
    var0: float = 15.0**2
    var_min: float = 4.0
    var_max: float = 5 * 15.0**2
    median_k: int = 3


@dataclass
class MixtureModel:
    """K weighted Gaussians per pixel, stored as ``(K, H, W)`` arrays.

    Components are kept sorted by ``weight / sigma`` descending; unused slots
    have zero weight and therefore sort last.
    """

    weight: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    config: BGConfig

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape[1:]

    @classmethod
    def from_frame(cls, frame: np.ndarray, config: BGConfig | None = None) -> "MixtureModel":
        config = config or BGConfig()
        frame = np.asarray(frame, dtype=np.float64)
        shape = (config.k,) + frame.shape
        weight = np.zeros(shape)
        mean = np.zeros(shape)
        var = np.full(shape, config.var0)
        weight[0] = 1.0
        mean[0] = frame
        return cls(weight, mean, var, config)


def to_intensity(frame: np.ndarray) -> np.ndarray:
    """Map a ``[0, 1]`` frame (``H x W`` or ``H x W x C``) to 0..255 grayscale."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        frame = frame.mean(axis=2)
    return frame * 255.0


def _sort_components(weight, mean, var):
    order = np.argsort(-(weight / np.sqrt(var)), axis=0, kind="stable")
    return (
        np.take_along_axis(weight, order, 0),
        np.take_along_axis(mean, order, 0),
        np.take_along_axis(var, order, 0),
    )


def bg_update(
    model: MixtureModel | None,
    frame_intensities: np.ndarray,
    learning_rate: float | None = None,
    config: BGConfig | None = None,
) -> tuple[MixtureModel, np.ndarray]:
    """Classify one frame against the model, then update the model with it.

    Passing ``model=None`` initializes a model from the frame; that first mask
    is all background by convention.
    """
    x = np.asarray(frame_intensities, dtype=np.float64)
    if model is None:
        m = MixtureModel.from_frame(x, config)
        return m, np.zeros(x.shape, dtype=bool)
    if x.shape != model.shape:
        raise ValueError(f"frame shape {x.shape} does not match model shape {model.shape}")
    cfg = model.config
    alpha = cfg.alpha if learning_rate is None else learning_rate
    if not 0.0 < alpha < 1.0:
        raise ValueError("learning rate must lie in (0, 1)")

    w, mu, var = model.weight.copy(), model.mean.copy(), model.var.copy()
    diff = x[None] - mu
    d2 = diff**2 / var
    within = (d2 < cfg.match_sigma**2) & (w > 0)

    # background set: shortest prefix whose cumulative weight reaches c_bg
    before = np.cumsum(w, axis=0) - w
    in_bg = before < cfg.c_bg
    foreground = ~np.any(within & in_bg, axis=0)

    matched = np.any(within, axis=0)
    nearest = np.argmin(np.where(within, d2, np.inf), axis=0)
    k_idx = np.arange(cfg.k)[:, None, None]
    hit = (k_idx == nearest[None]) & matched[None]

    w *= 1.0 - alpha
    w[hit] += alpha
    rho = np.minimum(alpha / np.maximum(w, 1e-12), 1.0)
    mu = np.where(hit, mu + rho * diff, mu)
    var = np.where(hit, var + rho * (diff**2 - var), var)

    # no match: the weakest (last) slot is replaced by a fresh component
    miss = ~matched
    w[-1][miss] = cfg.w0
    mu[-1][miss] = x[miss]
    var[-1][miss] = cfg.var0

    np.clip(var, cfg.var_min, cfg.var_max, out=var)
    w /= w.sum(axis=0, keepdims=True)
    w, mu, var = _sort_components(w, mu, var)
    return MixtureModel(w, mu, var, cfg), foreground


def median_denoise(mask: np.ndarray, k: int = 3) -> np.ndarray:
    """k x k median of a binary mask, border replicated."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median kernel must be odd, got {k}")
    out = ndimage.median_filter(np.asarray(mask, dtype=np.uint8), size=k, mode="nearest")
    return out.astype(bool)


def foreground_masks(frames: Sequence[np.ndarray], config: BGConfig | None = None) -> list[np.ndarray]:
    """Run the background model over a whole video and return denoised masks."""
    config = config or BGConfig()
    model = None
    masks = []
    for f in frames:
        model, raw = bg_update(model, to_intensity(f), config=config)
        masks.append(median_denoise(raw, config.median_k))
    return masks


def box_slices(box: BBox, frame_hw: tuple[int, int]) -> tuple[slice, slice]:
    """Pixel rows/cols covered by a box (half-open, half-away rounding, clipped)."""
    fh, fw = frame_hw
    r0 = int(np.clip(_round_half_away(box.y), 0, fh))
    r1 = int(np.clip(_round_half_away(box.y2), 0, fh))
    c0 = int(np.clip(_round_half_away(box.x), 0, fw))
    c1 = int(np.clip(_round_half_away(box.x2), 0, fw))
    return slice(r0, r1), slice(c0, c1)


def _round_half_away(v: float) -> float:
    return float(np.sign(v) * np.floor(abs(v) + 0.5))


def foreground_rate(proposal: Proposal, masks: Mapping[int, np.ndarray] | Sequence[np.ndarray]) -> float:
    """Mean over the proposal's real frames of the foreground fraction inside the box."""
    rates = []
    for b in proposal.boxes[: proposal.n_valid]:
        try:
            m = masks[b.frame]
        except (KeyError, IndexError):
            raise KeyError(f"no foreground mask for frame {b.frame}") from None
        rs, cs = box_slices(b, m.shape)
        region = m[rs, cs]
        rates.append(float(region.mean()) if region.size else 0.0)
    return float(np.mean(rates)) if rates else 0.0


def filter_static(
    proposals: Sequence[Proposal],
    masks: Mapping[int, np.ndarray] | Sequence[np.ndarray],
    thresholds: Mapping[str, float],
) -> list[Proposal]:
    for t in thresholds.values():
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
    return [p for p in proposals if foreground_rate(p, masks) >= thresholds[p.obj_class]]


def rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths of the flattened (row-major) mask, starting with a 0-run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return runs


def rle_decode(runs: Sequence[int], shape: tuple[int, int]) -> np.ndarray:
    vals = np.arange(len(runs)) % 2 == 1
    return np.repeat(vals, runs).reshape(shape)


def write_masks(path: str | Path, video: str, masks: Sequence[np.ndarray]) -> None:
    with open(path, "w") as fh:
        for i, m in enumerate(masks):
            rec = {"video": video, "frame": i, "h": m.shape[0], "w": m.shape[1], "rle": rle_encode(m)}
            fh.write(json.dumps(rec) + "\n")


def read_masks(path: str | Path) -> dict[str, dict[int, np.ndarray]]:
    out: dict[str, dict[int, np.ndarray]] = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out.setdefault(r["video"], {})[r["frame"]] = rle_decode(r["rle"], (r["h"], r["w"]))
    return out
