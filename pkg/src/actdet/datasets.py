"""Labeled clip datasets cut from synthetic scenes along their ground-truth tracks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .clipnet import ClipDataset
from .motionenc import MOTION_CHANNELS, RGB_CHANNELS, proposal_clips
from .synthgen import RenderedScene, SceneScript, render_scene
from .tracklet import Trajectory, make_proposals

ALL_CHANNELS = RGB_CHANNELS + MOTION_CHANNELS


@dataclass
class ClipGeometry:
    clip_len: int = 16
    stride: int = 8
    margin: float = 1.5
    resized_hw: tuple[int, int] = (32, 32)
    crop_mode: str = "track"
    motion_normalizer: tuple[float, float] | None = (4.0, 4.0)
    """Pixels per frame that map to 1.0 in the motion channels; ``None`` uses the frame size."""


def actor_trajectory(scene: RenderedScene, actor: int) -> Trajectory:
    boxes = sorted((b for b in scene.detections if scene.truth[(b.frame, b.x, b.y)] == actor), key=lambda b: b.frame)
    return Trajectory(actor, boxes[0].obj_class, boxes)


def scene_samples(scene: RenderedScene, geometry: ClipGeometry) -> Iterable[tuple[np.ndarray, str, str, int, int]]:
    """Yield ``(clip[T,H,W,5], label, video, t0, t1)`` for each window of every annotated actor."""
    fh, fw = scene.frames.shape[1:3]
    for gt in scene.ground_truth:
        traj = actor_trajectory(scene, gt["track"])
        for p in make_proposals(traj, geometry.clip_len, geometry.stride, geometry.margin, (fh, fw), geometry.resized_hw):
            rgb, motion = proposal_clips(scene.frames, p, geometry.crop_mode, geometry.margin, geometry.motion_normalizer)
            yield np.concatenate([rgb.data, motion.data], axis=3), gt["class"], scene.video_id, p.t0, p.valid_end


@dataclass
class SampleIndex:
    """Where each sample of a :class:`ClipDataset` came from."""

    videos: list[str]
    spans: list[tuple[int, int]]
    durations: dict[str, int]


def build_clip_dataset(
    scripts: Sequence[SceneScript],
    class_names: Sequence[str],
    geometry: ClipGeometry,
) -> tuple[ClipDataset, SampleIndex]:
    """Render each script and cut labeled RGB+motion clips along its ground-truth tracks."""
    ids = {c: i for i, c in enumerate(class_names)}
    clips, labels = [], []
    index = SampleIndex([], [], {})
    for s in scripts:
        scene = render_scene(s)
        index.durations[scene.video_id] = scene.n_frames
        for clip, label, video, t0, t1 in scene_samples(scene, geometry):
            if label not in ids:
                continue
            clips.append(clip)
            labels.append(ids[label])
            index.videos.append(video)
            index.spans.append((t0, t1))
    shape = (0, geometry.clip_len) + tuple(geometry.resized_hw) + (len(ALL_CHANNELS),)
    data = np.stack(clips) if clips else np.zeros(shape, dtype=np.float32)
    return ClipDataset(data, np.array(labels, dtype=np.int64), tuple(class_names), ALL_CHANNELS), index
