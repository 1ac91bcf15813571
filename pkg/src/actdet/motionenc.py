"""Clip tensors, box-masked motion clips and horizontal flip augmentation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .tracklet import BBox, ContractViolation

RGB_CHANNELS = ("r", "g", "b")
MOTION_CHANNELS = ("dx", "dy")

FLIP_LABELS = {
    "vehicle_turns_left": "vehicle_turns_right",
    "vehicle_turns_right": "vehicle_turns_left",
}


@dataclass
class ClipTensor:
    """Dense ``T x H x W x C`` clip, frame-major then row-major."""

    data: np.ndarray
    channels: tuple[str, ...]
    value_scale: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"clip data must be 4-D (T, H, W, C), got shape {self.data.shape}")
        if self.data.shape[3] != len(self.channels):
            raise ValueError(f"{self.data.shape[3]} channels in data but {len(self.channels)} names")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("clip contains non-finite values")
        self.channels = tuple(self.channels)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def header(self) -> dict:
        return {
            "shape": list(self.data.shape),
            "channels": list(self.channels),
            "dtype": "float32",
            "byte_order": "little",
            "layout": "THWC",
            "value_scale": list(self.value_scale),
        }

    def payload(self) -> bytes:
        return np.ascontiguousarray(self.data, dtype="<f4").tobytes()

    def save(self, path: str | Path) -> None:
        """Raw little-endian float32 payload at ``path`` plus a ``.json`` sidecar."""
        path = Path(path)
        path.write_bytes(self.payload())
        sidecar(path).write_text(json.dumps(self.header(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClipTensor":
        path = Path(path)
        header = json.loads(sidecar(path).read_text())
        if header.get("dtype") != "float32" or header.get("byte_order") != "little":
            raise ValueError(f"unsupported clip encoding in {sidecar(path)}")
        shape = tuple(header["shape"])
        raw = path.read_bytes()
        if len(raw) != 4 * int(np.prod(shape)):
            raise ValueError(f"payload of {path} has {len(raw)} bytes, header declares shape {shape}")
        data = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        return cls(data, tuple(header["channels"]), tuple(header["value_scale"]))


def sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


@dataclass
class MotionSample:
    rgb: ClipTensor
    motion: ClipTensor
    label: str

    def __post_init__(self):
        if self.rgb.shape[:3] != self.motion.shape[:3]:
            raise ValueError("rgb and motion clips must share T, H, W")


def displacements(boxes: Sequence[BBox]) -> np.ndarray:
    """Forward differences of the top-left corners, ``(T, 2)``; the last row is zero."""
    if len(boxes) < 1:
        raise ValueError("need at least one box")
    xy = np.array([(b.x, b.y) for b in boxes], dtype=np.float64)
    d = np.zeros_like(xy)
    d[:-1] = xy[1:] - xy[:-1]
    return d


def round_half_away(v):
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def box_to_grid(box: BBox, crop: Sequence[float], resized_hw: tuple[int, int]) -> tuple[int, int, int, int]:
    """Map a source-frame box into the resized crop grid.

    Returns half-open ``(r0, r1, c0, c1)`` clipped to the grid.
    """
    cx, cy, cw, ch = crop
    out_h, out_w = resized_hw
    sx, sy = out_w / cw, out_h / ch
    c0, c1 = round_half_away([(box.x - cx) * sx, (box.x2 - cx) * sx])
    r0, r1 = round_half_away([(box.y - cy) * sy, (box.y2 - cy) * sy])
    c0, c1 = int(np.clip(c0, 0, out_w)), int(np.clip(c1, 0, out_w))
    r0, r1 = int(np.clip(r0, 0, out_h)), int(np.clip(r1, 0, out_h))
    return r0, r1, c0, c1


def encode_motion_clip(
    boxes: Sequence[BBox],
    crops: np.ndarray | Sequence[float],
    resized_hw: tuple[int, int],
    normalizer: tuple[float, float],
) -> ClipTensor:
    """Two-channel clip that is zero except inside each frame's box.

    Inside box ``i`` the channels hold ``(dx_i / normalizer[0], dy_i / normalizer[1])``.
    ``crops`` is either one ``(x, y, w, h)`` rectangle or one per frame.
    """
    crops = np.asarray(crops, dtype=np.float64)
    if crops.ndim == 1:
        crops = np.tile(crops, (len(boxes), 1))
    out_h, out_w = resized_hw
    d = displacements(boxes)
    d[:, 0] /= normalizer[0]
    d[:, 1] /= normalizer[1]
    clip = np.zeros((len(boxes), out_h, out_w, 2), dtype=np.float32)
    for i, b in enumerate(boxes):
        r0, r1, c0, c1 = box_to_grid(b, crops[i], resized_hw)
        if r1 <= r0 or c1 <= c0:
            raise ContractViolation(f"box at frame {b.frame} falls outside its crop")
        clip[i, r0:r1, c0:c1] = d[i]
    return ClipTensor(clip, MOTION_CHANNELS, (-1.0, 1.0))


def concat_channels(rgb: ClipTensor, motion: ClipTensor) -> ClipTensor:
    if rgb.shape[:3] != motion.shape[:3]:
        raise ValueError(f"cannot concatenate clips of shapes {rgb.shape} and {motion.shape}")
    data = np.concatenate([rgb.data, motion.data.astype(rgb.data.dtype)], axis=3)
    return ClipTensor(data, rgb.channels + motion.channels, rgb.value_scale)


def flip_label(label: str) -> str:
    return FLIP_LABELS.get(label, label)


def flip_array(clip: np.ndarray, channels: Sequence[str]) -> np.ndarray:
    """Mirror a ``(T, H, W, C)`` array along width and negate its ``dx`` channel."""
    out = clip[:, :, ::-1, :].copy()
    if "dx" in channels:
        k = list(channels).index("dx")
        out[..., k] = -out[..., k]
    return out


def flip_horizontal(sample: MotionSample) -> MotionSample:
    rgb = ClipTensor(flip_array(sample.rgb.data, sample.rgb.channels), sample.rgb.channels, sample.rgb.value_scale)
    motion = ClipTensor(
        flip_array(sample.motion.data, sample.motion.channels), sample.motion.channels, sample.motion.value_scale
    )
    return MotionSample(rgb, motion, flip_label(sample.label))


def crop_rgb(frames: np.ndarray, frame_ids: Sequence[int], crops: np.ndarray, resized_hw: tuple[int, int]) -> ClipTensor:
    """Bilinearly resample crops from ``frames`` into a ``[-1, 1]`` RGB clip.

    ``frames`` is ``(N, H, W)`` or ``(N, H, W, C)`` with values in ``[0, 1]``;
    single-channel video is replicated to three channels. Frame ids past the
    end of the video repeat its last frame; samples outside the frame take
    the nearest edge pixel.
    """
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[..., None]
    out_h, out_w = resized_hw
    n_frames, _, _, n_ch = frames.shape
    out = np.empty((len(frame_ids), out_h, out_w, 3), dtype=np.float32)
    for i, (f, (cx, cy, cw, ch)) in enumerate(zip(frame_ids, crops)):
        img = frames[min(f, n_frames - 1)]
        ys = cy + (np.arange(out_h) + 0.5) * ch / out_h - 0.5
        xs = cx + (np.arange(out_w) + 0.5) * cw / out_w - 0.5
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        if n_ch == 1:
            out[i] = ndimage.map_coordinates(img[..., 0], [yy, xx], order=1, mode="nearest")[..., None]
        else:
            for c in range(3):
                out[i, ..., c] = ndimage.map_coordinates(img[..., c], [yy, xx], order=1, mode="nearest")
    return ClipTensor(out * 2.0 - 1.0, RGB_CHANNELS, (-1.0, 1.0))


def proposal_clips(
    frames: np.ndarray,
    proposal,
    crop_mode: str = "track",
    margin: float = 1.5,
    normalizer: tuple[float, float] | None = None,
) -> tuple[ClipTensor, ClipTensor]:
    """RGB and motion clips for a proposal, sharing one crop geometry.

    ``normalizer`` defaults to the source frame ``(width, height)``.
    """
    from .tracklet import frame_crops

    crops = frame_crops(proposal, crop_mode, margin)
    if normalizer is None:
        normalizer = (frames.shape[2], frames.shape[1])
    frame_ids = [b.frame for b in proposal.boxes]
    rgb = crop_rgb(frames, frame_ids, crops, proposal.resized_hw)
    motion = encode_motion_clip(proposal.boxes, crops, proposal.resized_hw, normalizer)
    return rgb, motion
