"""Controlled studies on synthetic single-activity clips.

Each study renders a fixed-seed dataset, trains the clip classifier under
two settings, and reports clip accuracy, per-class recall and per-class
nAUDC. For nAUDC every test clip is a video of its own: the classifier's
softmax probability for class ``c`` becomes one detection of ``c`` spanning
the clip, and the clip's label is the ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clipnet import ClipDataset, TrainConfig, predict, train
from .datasets import ALL_CHANNELS, ClipGeometry, SampleIndex, build_clip_dataset
from .motionenc import RGB_CHANNELS
from .refiner import Detection
from .scorer import GroundTruthActivity, class_naudc
from .synthgen import PERSON_CLASSES, VEHICLE_CLASSES, SynthConfig, generate_dataset, scene_boxes, stable_seed, surveillance_script
from .tracklet import TrackerConfig, group_by_frame, identity_purity, iou, track_video


@dataclass
class VariantResult:
    name: str
    accuracy: float
    recall: dict[str, float]
    naudc: dict[str, float | None]
    history: list[dict] = field(default_factory=list)
    params: object = None


def clip_detections(probs: np.ndarray, index: SampleIndex, class_names: Sequence[str]) -> list[Detection]:
    return [
        Detection(f"{video}#{i}", c, t0, t1, float(p[k]))
        for i, (video, (t0, t1), p) in enumerate(zip(index.videos, index.spans, probs))
        for k, c in enumerate(class_names)
    ]


def clip_ground_truth(ds: ClipDataset, index: SampleIndex) -> tuple[list[GroundTruthActivity], dict[str, int]]:
    gts, durations = [], {}
    for i, (video, (t0, t1), y) in enumerate(zip(index.videos, index.spans, ds.labels)):
        key = f"{video}#{i}"
        gts.append(GroundTruthActivity(key, ds.class_names[y], t0, t1))
        durations[key] = t1 - t0
    return gts, durations


def evaluate(name: str, params, test: ClipDataset, index: SampleIndex, mode: str, history=()) -> VariantResult:
    probs = predict(test, params, mode)
    pred = probs.argmax(axis=1)
    recall = {c: float(np.mean(pred[test.labels == k] == k)) for k, c in enumerate(test.class_names) if np.any(test.labels == k)}
    gts, durations = clip_ground_truth(test, index)
    naudc = class_naudc(clip_detections(probs, index, test.class_names), gts, test.class_names, durations)
    return VariantResult(name, float(np.mean(pred == test.labels)), recall, naudc, list(history), params)


def split_datasets(
    classes: Sequence[str],
    n_videos: int,
    seed: int,
    geometry: ClipGeometry,
    test_fraction: float = 1 / 3,
    class_weights: dict | None = None,
):
    ds = generate_dataset(
        SynthConfig(n_videos=n_videos, classes=tuple(classes), seed=seed, n_frames=geometry.clip_len,
                    val_fraction=test_fraction, class_weights=class_weights)
    )
    train_set, _ = build_clip_dataset([ds.scripts[i] for i in ds.train_idx], classes, geometry)
    test_set, test_index = build_clip_dataset([ds.scripts[i] for i in ds.val_idx], classes, geometry)
    return train_set, test_set, test_index


def _variant(train_set, test_set, index, name, mode, channels, epochs, seed, flip=False) -> VariantResult:
    tr, te = train_set.select_channels(channels), test_set.select_channels(channels)
    params, hist = train(tr, TrainConfig(mode=mode, epochs=epochs, seed=seed, flip_augment=flip))
    return evaluate(name, params, te, index, mode, hist)


def vehicle_ablation(seed: int = 0, n_videos: int = 300, epochs: int = 10, geometry: ClipGeometry | None = None) -> dict[str, VariantResult]:
    """RGB only versus RGB plus motion clip on vehicle activities, both with the GAP head."""
    geometry = geometry or ClipGeometry()
    tr, te, idx = split_datasets(VEHICLE_CLASSES, n_videos, seed, geometry)
    return {
        "rgb_only": _variant(tr, te, idx, "rgb_only", "gap_only", RGB_CHANNELS, epochs, seed),
        "rgb+motion": _variant(tr, te, idx, "rgb+motion", "gap_only", ALL_CHANNELS, epochs, seed),
    }


def person_ablation(seed: int = 0, n_videos: int = 300, epochs: int = 10, geometry: ClipGeometry | None = None) -> dict[str, VariantResult]:
    """GAP head versus part-attention head on person activities, RGB input."""
    geometry = geometry or ClipGeometry()
    tr, te, idx = split_datasets(PERSON_CLASSES, n_videos, seed, geometry)
    return {
        "gap_only": _variant(tr, te, idx, "gap_only", "gap_only", RGB_CHANNELS, epochs, seed),
        "part_attention": _variant(tr, te, idx, "part_attention", "part_attention", RGB_CHANNELS, epochs, seed),
    }


def flip_study(
    seed: int = 0,
    n_videos: int = 240,
    epochs: int = 10,
    right_weight: float = 0.25,
    geometry: ClipGeometry | None = None,
) -> dict[str, VariantResult]:
    """Turn recall balance when right turns are rare in training, with and without flips.

    The test split is drawn from a balanced dataset with a different seed.
    """
    geometry = geometry or ClipGeometry()
    classes = ("vehicle_turns_left", "vehicle_turns_right")
    tr, _, _ = split_datasets(classes, n_videos, seed, geometry, test_fraction=0.0,
                              class_weights={"vehicle_turns_right": right_weight})
    _, te, idx = split_datasets(classes, n_videos // 2, seed + 1000, geometry, test_fraction=1.0)
    return {
        "no_flip": _variant(tr, te, idx, "no_flip", "gap_only", ALL_CHANNELS, epochs, seed, flip=False),
        "flip": _variant(tr, te, idx, "flip", "gap_only", ALL_CHANNELS, epochs, seed, flip=True),
    }


def tracker_scenes(n_scenes: int = 20, jitter: float = 0.3, seed: int = 0, speed_range=(0.75, 1.25)):
    """Jittered detections and their identities for busy scenes, one pair per scene."""
    activities = ("vehicle_moves", "vehicle_turns_left", "person_walks", "vehicle_u_turn", "person_stands")
    for k in range(n_scenes):
        script = surveillance_script(stable_seed(seed, "tracker", k), activities, n_frames=64, burn_in=0,
                                     activity_len=24, jitter=jitter, video_id=f"trk{k}", speed_range=speed_range)
        yield scene_boxes(script)


def consecutive_iou_floor(boxes, truth) -> float:
    """Smallest IoU between an actor's boxes on consecutive frames."""
    by_actor: dict[int, list] = {}
    for b in boxes:
        by_actor.setdefault(truth[(b.frame, b.x, b.y)], []).append(b)
    return min(
        (iou(a, b) for seq in by_actor.values() for a, b in zip(seq, seq[1:])),
        default=1.0,
    )


def tracker_purity(n_scenes: int = 20, jitter: float = 0.3, seed: int = 0, config: TrackerConfig | None = None):
    """Per-scene identity purity of the IoU tracker and per-scene consecutive-IoU floor."""
    purity, floor = [], []
    for boxes, truth in tracker_scenes(n_scenes, jitter, seed):
        purity.append(identity_purity(track_video(group_by_frame(boxes), config), truth))
        floor.append(consecutive_iou_floor(boxes, truth))
    return purity, floor
