"""IoU tracking-by-detection and sliding-window proposal generation.

Boxes use the top-left corner convention: ``(x, y)`` is the upper-left pixel
corner, ``w`` extends along columns and ``h`` along rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

OBJ_CLASSES = ("person", "vehicle")


class ContractViolation(ValueError):
    """Raised when an operation's stated precondition does not hold."""


@dataclass(frozen=True)
class BBox:
    frame: int
    x: float
    y: float
    w: float
    h: float
    score: float = 1.0
    obj_class: str = "person"

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be >= 0, got {self.frame}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.obj_class not in OBJ_CLASSES:
            raise ValueError(f"unknown object class {self.obj_class!r}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    def clamp(self, frame_w: float, frame_h: float) -> "BBox":
        x1, y1 = min(max(self.x, 0.0), frame_w), min(max(self.y, 0.0), frame_h)
        x2, y2 = min(max(self.x2, 0.0), frame_w), min(max(self.y2, 0.0), frame_h)
        return replace(self, x=x1, y=y1, w=x2 - x1, h=y2 - y1)


@dataclass
class Trajectory:
    track_id: int
    obj_class: str
    boxes: list[BBox] = field(default_factory=list)

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("a trajectory holds at least one box")
        for prev, cur in zip(self.boxes, self.boxes[1:]):
            if cur.frame != prev.frame + 1:
                raise ValueError("trajectory frames must be consecutive")
        if any(b.obj_class != self.obj_class for b in self.boxes):
            raise ValueError("all boxes of a trajectory share one object class")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def start(self) -> int:
        return self.boxes[0].frame

    @property
    def end(self) -> int:
        """One past the last frame."""
        return self.boxes[-1].frame + 1


@dataclass(frozen=True)
class Proposal:
    proposal_id: str
    track_id: int
    obj_class: str
    t0: int
    t1: int
    boxes: tuple[BBox, ...]
    crop: tuple[float, float, float, float]
    resized_hw: tuple[int, int]
    n_valid: int
    """Number of leading boxes that come from the trajectory (the rest is padding)."""

    @property
    def valid_end(self) -> int:
        return self.t0 + self.n_valid


@dataclass
class TrackerConfig:
    iou_min: float = 0.3
    min_track_len: int = 8


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # clamp: x2 - x may differ from w by one ulp
    return min(inter / (a.w * a.h + b.w * b.h - inter), 1.0)


def associate_step(
    active_tracks: Sequence[Trajectory],
    frame_detections: Sequence[BBox],
    iou_min: float = 0.3,
    next_id: int = 0,
) -> tuple[list[Trajectory], list[Trajectory], list[Trajectory]]:
    """Greedily extend ``active_tracks`` with one frame of detections.

    Candidate (track, detection) pairs of the same object class are visited in
    descending IoU order; a pair is accepted when both sides are still free and
    the IoU reaches ``iou_min``. Returns ``(extended, terminated, new)``; new
    tracks take consecutive ids starting at ``next_id``.
    """
    if frame_detections:
        frame = frame_detections[0].frame
        if any(d.frame != frame for d in frame_detections):
            raise ContractViolation("detections passed to associate_step must share one frame")
        for t in active_tracks:
            if t.end != frame:
                raise ContractViolation(
                    f"track {t.track_id} ends at frame {t.end - 1}, detections are at frame {frame}"
                )

    pairs = []
    for ti, t in enumerate(active_tracks):
        last = t.boxes[-1]
        for di, d in enumerate(frame_detections):
            if d.obj_class != t.obj_class:
                continue
            v = iou(last, d)
            if v >= iou_min:
                pairs.append((-v, ti, di))
    pairs.sort()

    track_match: dict[int, int] = {}
    used_dets: set[int] = set()
    for _, ti, di in pairs:
        if ti in track_match or di in used_dets:
            continue
        track_match[ti] = di
        used_dets.add(di)

    extended, terminated = [], []
    for ti, t in enumerate(active_tracks):
        if ti in track_match:
            d = frame_detections[track_match[ti]]
            extended.append(Trajectory(t.track_id, t.obj_class, [*t.boxes, d]))
        else:
            terminated.append(t)
    new = []
    for di, d in enumerate(frame_detections):
        if di not in used_dets:
            new.append(Trajectory(next_id + len(new), d.obj_class, [d]))
    return extended, terminated, new


def group_by_frame(detections: Iterable[BBox]) -> list[tuple[int, list[BBox]]]:
    by_frame: dict[int, list[BBox]] = {}
    for d in detections:
        by_frame.setdefault(d.frame, []).append(d)
    return sorted(by_frame.items())


def track_video(
    detections_by_frame: Mapping[int, Sequence[BBox]] | Iterable[tuple[int, Sequence[BBox]]],
    config: TrackerConfig | None = None,
) -> list[Trajectory]:
    """Run the IoU tracker over a whole video.

    Frames must be presented in strictly increasing order; a missing frame
    terminates every active track (no gap tolerance). Trajectories shorter
    than ``config.min_track_len`` are dropped and the survivors renumbered
    ``0..n-1`` in creation order.
    """
    config = config or TrackerConfig()
    items = detections_by_frame.items() if isinstance(detections_by_frame, Mapping) else detections_by_frame

    active: list[Trajectory] = []
    finished: list[Trajectory] = []
    next_id = 0
    prev_frame = None
    for frame, dets in items:
        if prev_frame is not None and frame <= prev_frame:
            raise ContractViolation(f"frame {frame} presented after frame {prev_frame}")
        if prev_frame is not None and frame != prev_frame + 1:
            finished.extend(active)
            active = []
        dets = list(dets)
        if any(d.frame != frame for d in dets):
            raise ContractViolation(f"detection frame index disagrees with frame key {frame}")
        extended, terminated, new = associate_step(active, dets, config.iou_min, next_id)
        next_id += len(new)
        finished.extend(terminated)
        active = extended + new
        prev_frame = frame
    finished.extend(active)

    kept = sorted((t for t in finished if len(t) >= config.min_track_len), key=lambda t: t.track_id)
    return [Trajectory(i, t.obj_class, t.boxes) for i, t in enumerate(kept)]


def union_crop(boxes: Sequence[BBox], margin: float, frame_hw: tuple[int, int]) -> tuple[float, float, float, float]:
    """Union of ``boxes`` scaled by ``margin`` about its center, clipped to the frame."""
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
    hw, hh = (x2 - x1) * margin / 2, (y2 - y1) * margin / 2
    fh, fw = frame_hw
    cx1, cy1 = max(cx - hw, 0.0), max(cy - hh, 0.0)
    cx2, cy2 = min(cx + hw, float(fw)), min(cy + hh, float(fh))
    return (cx1, cy1, cx2 - cx1, cy2 - cy1)


def make_proposals(
    traj: Trajectory,
    clip_len: int = 32,
    stride: int = 16,
    margin: float = 1.5,
    frame_hw: tuple[int, int] = (128, 128),
    resized_hw: tuple[int, int] = (64, 64),
) -> list[Proposal]:
    """Slice a trajectory into fixed-length windows.

    Full windows start at ``0, stride, 2*stride, ...`` (relative to the
    trajectory start). When the last full window stops short of the trajectory
    end, one more window is emitted at the next stride position and padded by
    repeating the final box; a trajectory shorter than ``clip_len`` yields a
    single padded window.
    """
    if clip_len < 2 or stride < 1:
        raise ValueError("clip_len must be >= 2 and stride >= 1")
    n = len(traj)
    starts = list(range(0, n - clip_len + 1, stride))
    if not starts:
        starts = [0]
    elif starts[-1] + clip_len < n and starts[-1] + stride < n:
        starts.append(starts[-1] + stride)

    out = []
    for s in starts:
        real = traj.boxes[s : s + clip_len]
        last = real[-1]
        pad = [replace(last, frame=last.frame + k + 1) for k in range(clip_len - len(real))]
        boxes = tuple(real) + tuple(pad)
        t0 = traj.start + s
        out.append(
            Proposal(
                proposal_id=f"t{traj.track_id}_f{t0}",
                track_id=traj.track_id,
                obj_class=traj.obj_class,
                t0=t0,
                t1=t0 + clip_len,
                boxes=boxes,
                crop=union_crop(real, margin, frame_hw),
                resized_hw=tuple(resized_hw),
                n_valid=len(real),
            )
        )
    return out


def frame_crops(proposal: Proposal, mode: str = "union", margin: float = 1.5) -> np.ndarray:
    """Per-frame crop rectangles ``(T, 4)`` as ``(x, y, w, h)``.

    ``union`` repeats the proposal's fixed crop. ``track`` follows the box:
    each frame is centered on its own box, with a constant size equal to the
    largest box of the window times ``margin`` (not clipped to the frame).
    """
    if mode == "union":
        return np.tile(np.asarray(proposal.crop, dtype=np.float64), (len(proposal.boxes), 1))
    if mode != "track":
        raise ValueError(f"unknown crop mode {mode!r}")
    cw = max(b.w for b in proposal.boxes) * margin
    ch = max(b.h for b in proposal.boxes) * margin
    rects = np.empty((len(proposal.boxes), 4))
    for i, b in enumerate(proposal.boxes):
        cx, cy = b.center
        rects[i] = (cx - cw / 2, cy - ch / 2, cw, ch)
    return rects


def identity_purity(trajectories: Sequence[Trajectory], truth: Mapping[tuple[int, float, float], int]) -> float:
    """Box-weighted fraction of tracked boxes that carry their track's majority identity.

    ``truth`` maps ``(frame, x, y)`` of each detection to its ground-truth actor.
    """
    total = agree = 0
    for t in trajectories:
        ids = [truth[(b.frame, b.x, b.y)] for b in t.boxes]
        counts: dict[int, int] = {}
        for i in ids:
            counts[i] = counts.get(i, 0) + 1
        agree += max(counts.values())
        total += len(ids)
    return agree / total if total else 1.0
