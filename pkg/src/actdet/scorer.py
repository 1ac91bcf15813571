"""Temporal activity-detection scoring: Pmiss, time-based false alarm and nAUDC.

A detection matches a ground-truth instance of the same class and video when
their temporal IoU reaches ``tiou_min``; matching is one-to-one and greedy in
descending detection confidence. Time-based false alarm divides the frames
covered by unmatched detections (and not by any instance of the class) by
the total frame count minus the frames covered by instances of the class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .refiner import Detection, temporal_iou


class UndefinedMetric(ValueError):
    """Pmiss is undefined for a class with no ground-truth instances."""


@dataclass(frozen=True)
class GroundTruthActivity:
    video: str
    cls: str
    t0: int
    t1: int
    track: int | None = None

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError(f"empty span [{self.t0}, {self.t1})")

    @classmethod
    def from_json(cls, r: dict) -> "GroundTruthActivity":
        return cls(r["video"], r["class"], int(r["t0"]), int(r["t1"]), r.get("track"))

    def to_json(self) -> dict:
        return {"video": self.video, "class": self.cls, "t0": self.t0, "t1": self.t1, "track": self.track}


@dataclass
class Alignment:
    matches: list[tuple[Detection, GroundTruthActivity]]
    misses: list[GroundTruthActivity]
    false_alarms: list[Detection]


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    pmiss: float
    tfa: float


@dataclass
class DETCurve:
    cls: str
    points: list[OperatingPoint]
    """Ordered by descending threshold; the first point is at +inf."""


def align(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruthActivity],
    cls: str,
    threshold: float = -math.inf,
    tiou_min: float = 0.2,
    classes: Sequence[str] | None = None,
) -> Alignment:
    """Greedy one-to-one matching of class ``cls`` detections scoring at least ``threshold``.

    Each detection, in descending score order, takes the free ground truth
    with the highest temporal IoU, provided that IoU is at least ``tiou_min``.
    """
    if classes is not None and cls not in classes:
        raise KeyError(f"class {cls!r} not in the label map")
    dets = sorted(
        (d for d in detections if d.cls == cls and d.score >= threshold),
        key=lambda d: (-d.score, d.video, d.t0, d.t1),
    )
    gts = [g for g in ground_truths if g.cls == cls]
    free = set(range(len(gts)))
    matches, fas = [], []
    for d in dets:
        best, best_iou = None, tiou_min
        for j in sorted(free):
            g = gts[j]
            if g.video != d.video:
                continue
            v = temporal_iou(d.t0, d.t1, g.t0, g.t1)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = j, v
        if best is None:
            fas.append(d)
        else:
            free.discard(best)
            matches.append((d, gts[best]))
    return Alignment(matches, [gts[j] for j in sorted(free)], fas)


def _frames(spans) -> dict[str, set[int]]:
    out: dict[str, set[int]] = {}
    for video, t0, t1 in spans:
        out.setdefault(video, set()).update(range(t0, t1))
    return out


def operating_point(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruthActivity],
    cls: str,
    threshold: float,
    durations: Mapping[str, int],
    tiou_min: float = 0.2,
) -> tuple[float, float]:
    """``(pmiss, tfa)`` for class ``cls`` at one confidence threshold.

    ``durations`` gives the frame count of every scored video.
    """
    gts = [g for g in ground_truths if g.cls == cls]
    if not gts:
        raise UndefinedMetric(f"no ground-truth instances of {cls!r}")
    a = align(detections, gts, cls, threshold, tiou_min)
    pmiss = len(a.misses) / len(gts)
    gt_frames = _frames((g.video, g.t0, g.t1) for g in gts)
    non_activity = sum(durations.values()) - sum(len(f) for f in gt_frames.values())
    if non_activity <= 0:
        raise ValueError(f"class {cls!r} covers the whole duration; TFA is undefined")
    fa_frames = _frames((d.video, d.t0, d.t1) for d in a.false_alarms)
    fa_time = sum(len(f - gt_frames.get(v, set())) for v, f in fa_frames.items())
    return pmiss, fa_time / non_activity


def det_curve(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruthActivity],
    cls: str,
    durations: Mapping[str, int],
    tiou_min: float = 0.2,
) -> DETCurve:
    """One operating point at +inf and one per distinct confidence of class ``cls``."""
    levels = sorted({d.score for d in detections if d.cls == cls}, reverse=True)
    points = []
    for thr in [math.inf] + levels:
        pm, fa = operating_point(detections, ground_truths, cls, thr, durations, tiou_min)
        points.append(OperatingPoint(thr, pm, fa))
    return DETCurve(cls, points)


def naudc(curve: DETCurve, tfa_limit: float = 0.2, interpolation: str = "step") -> float:
    """Area under Pmiss over TFA in ``[0, tfa_limit]``, divided by ``tfa_limit``.

    ``step`` integrates the lower envelope ``f(t) = min{pmiss_i : tfa_i <= t}``;
    ``trapezoid`` joins the envelope's corner points linearly. Past the last
    point the curve is extended at its minimum Pmiss.
    """
    pts = sorted((p.tfa, p.pmiss) for p in curve.points)
    if not pts or pts[0][0] > 0:
        pts = [(0.0, 1.0)] + pts
    # lower envelope corners
    env: list[tuple[float, float]] = []
    for t, pm in pts:
        if env and pm >= env[-1][1]:
            continue
        if env and t == env[-1][0]:
            env[-1] = (t, pm)
        else:
            env.append((t, pm))
    area = 0.0
    if interpolation == "step":
        for (t0, pm), nxt in zip(env, env[1:] + [(math.inf, 0.0)]):
            lo, hi = min(t0, tfa_limit), min(nxt[0], tfa_limit)
            area += (hi - lo) * pm
    elif interpolation == "trapezoid":
        for (t0, p0), (t1, p1) in zip(env, env[1:]):
            if t0 >= tfa_limit:
                break
            if t1 > tfa_limit:
                p1 = p0 + (p1 - p0) * (tfa_limit - t0) / (t1 - t0)
                t1 = tfa_limit
            area += (t1 - t0) * (p0 + p1) / 2
        last_t, last_p = env[-1]
        if last_t < tfa_limit:
            area += (tfa_limit - last_t) * last_p
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return float(min(max(area / tfa_limit, 0.0), 1.0))


def class_naudc(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruthActivity],
    classes: Sequence[str],
    durations: Mapping[str, int],
    tfa_limit: float = 0.2,
    tiou_min: float = 0.2,
    interpolation: str = "step",
) -> dict[str, float | None]:
    """nAUDC per class; ``None`` for classes without ground truth."""
    out: dict[str, float | None] = {}
    for c in classes:
        try:
            curve = det_curve(detections, ground_truths, c, durations, tiou_min)
        except UndefinedMetric:
            out[c] = None
            continue
        out[c] = naudc(curve, tfa_limit, interpolation)
    return out


def group_report(per_class: Mapping[str, float | None], group_map: Mapping[str, str]) -> dict[str, float | None]:
    """Unweighted mean per group plus ``overall`` across all scored classes."""
    groups: dict[str, list[float]] = {}
    for c, v in per_class.items():
        if c not in group_map:
            raise KeyError(f"class {c!r} is not assigned to a group")
        groups.setdefault(group_map[c], [])
        if v is not None:
            groups[group_map[c]].append(v)
    report = {g: (float(np.mean(v)) if v else None) for g, v in sorted(groups.items())}
    every = [v for v in per_class.values() if v is not None]
    report["overall"] = float(np.mean(every)) if every else None
    return report


def false_alarm_time(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruthActivity],
    classes: Sequence[str],
    tiou_min: float = 0.2,
) -> int:
    """Frames of false alarms summed over classes, with every detection admitted."""
    total = 0
    for c in classes:
        a = align(detections, ground_truths, c, -math.inf, tiou_min)
        gt_frames = _frames((g.video, g.t0, g.t1) for g in ground_truths if g.cls == c)
        fa = _frames((d.video, d.t0, d.t1) for d in a.false_alarms)
        total += sum(len(f - gt_frames.get(v, set())) for v, f in fa.items())
    return total
