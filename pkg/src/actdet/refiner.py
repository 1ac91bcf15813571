"""Window merging, level-set re-splitting and temporal NMS."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Detection:
    video: str
    cls: str
    t0: int
    t1: int
    score: float
    track: int | None = None

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError(f"empty span [{self.t0}, {self.t1})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_json(self) -> dict:
        return {"video": self.video, "class": self.cls, "t0": self.t0, "t1": self.t1, "score": self.score, "track": self.track}

    @classmethod
    def from_json(cls, r: dict) -> "Detection":
        return cls(r["video"], r["class"], int(r["t0"]), int(r["t1"]), float(r.get("score", 1.0)), r.get("track"))


@dataclass
class FrameScoreProfile:
    video: str
    track: int | None
    cls: str
    start: int
    scores: np.ndarray
    """Mean confidence per frame from ``start``; NaN where no window covers the frame."""

    @property
    def end(self) -> int:
        return self.start + len(self.scores)


def temporal_iou(a0: float, a1: float, b0: float, b1: float) -> float:
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    return inter / union if union > 0 else 0.0


def merge_windows(windows: Sequence[Detection]) -> FrameScoreProfile:
    """Average the confidences of all windows covering each frame."""
    if not windows:
        raise ValueError("merge_windows needs at least one window")
    key = (windows[0].video, windows[0].track, windows[0].cls)
    if any((w.video, w.track, w.cls) != key for w in windows):
        raise ValueError("windows must share video, track and class")
    start = min(w.t0 for w in windows)
    end = max(w.t1 for w in windows)
    scores = np.full(end - start, np.nan)
    # the profile is constant between window edges; each piece gets the
    # correctly rounded mean, which can never leave [min, max]
    edges = sorted({e for w in windows for e in (w.t0, w.t1)})
    for a, b in zip(edges, edges[1:]):
        covering = [w.score for w in windows if w.t0 <= a and b <= w.t1]
        if covering:
            scores[a - start : b - start] = float(sum(map(Fraction, covering)) / len(covering))
    return FrameScoreProfile(key[0], key[1], key[2], start, scores)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def split_candidates(profile: FrameScoreProfile, levels: Sequence[float] = (0.3, 0.5, 0.7)) -> list[Detection]:
    """Every maximal run with profile >= level, for each level; identical spans keep their best score."""
    if not levels:
        raise ValueError("need at least one level")
    best: dict[tuple[int, int], float] = {}
    s = profile.scores
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise ValueError(f"level {lv} outside (0, 1)")
        with np.errstate(invalid="ignore"):
            above = s >= lv
        for r0, r1 in _runs(above):
            conf = float(np.mean(s[r0:r1]))
            span = (profile.start + r0, profile.start + r1)
            best[span] = max(best.get(span, -1.0), conf)
    return [
        Detection(profile.video, profile.cls, t0, t1, min(max(c, 0.0), 1.0), profile.track)
        for (t0, t1), c in sorted(best.items())
    ]


def temporal_nms(candidates: Iterable[Detection], tiou_threshold: float = 0.5) -> list[Detection]:
    """Greedy suppression within each (video, class, track) group, highest score first."""
    if not 0.0 < tiou_threshold < 1.0:
        raise ValueError("tIoU threshold must lie in (0, 1)")
    order = sorted(candidates, key=lambda d: (-d.score, d.video, d.cls, str(d.track), d.t0, d.t1))
    kept: list[Detection] = []
    by_group: dict[tuple, list[Detection]] = {}
    for d in order:
        group = by_group.setdefault((d.video, d.cls, d.track), [])
        if all(temporal_iou(d.t0, d.t1, k.t0, k.t1) < tiou_threshold for k in group):
            group.append(d)
            kept.append(d)
    return kept


def refine(
    windows: Iterable[Detection],
    levels: Sequence[float] = (0.3, 0.5, 0.7),
    tiou_threshold: float = 0.5,
) -> list[Detection]:
    """Merge windows per (video, track, class), re-split, and suppress duplicates."""
    groups: dict[tuple, list[Detection]] = {}
    for w in windows:
        groups.setdefault((w.video, str(w.track), w.cls), []).append(w)
    candidates = []
    for key in sorted(groups):
        candidates += split_candidates(merge_windows(groups[key]), levels)
    return temporal_nms(candidates, tiou_threshold)
