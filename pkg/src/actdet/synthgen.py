"""Deterministic synthetic surveillance scenes with scripted activities.

Vehicles are a fixed, left-right symmetric sprite that follows a parametric
center trajectory, so their appearance carries no class information and only
motion separates the classes. Persons are a static two-band sprite whose
class texture sits in the upper or the lower band.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .tracklet import BBox

VEHICLE_CLASSES = (
    "vehicle_moves",
    "vehicle_stops",
    "vehicle_starts",
    "vehicle_turns_left",
    "vehicle_turns_right",
    "vehicle_u_turn",
)
PERSON_CLASSES = (
    "person_stands",
    "person_walks",
    "person_runs",
    "person_talks_on_phone",
    "person_gestures",
    "person_crouches",
)
ALL_CLASSES = VEHICLE_CLASSES + PERSON_CLASSES
MIRROR_LABELS = {
    "vehicle_turns_left": "vehicle_turns_right",
    "vehicle_turns_right": "vehicle_turns_left",
}

BACKGROUND = 0.5
SPEED_RANGE = (1.5, 3.0)
HEADING_JITTER = math.radians(10.0)


def _vehicle_sprite() -> np.ndarray:
    s = np.full((10, 14), 0.2)
    s[2:4, 3:11] = 0.55
    s[7:9, 1:3] = 0.9
    s[7:9, 11:13] = 0.9
    return s


VEHICLE_SPRITE = _vehicle_sprite()
PERSON_HW = (24, 10)
PERSON_BODY, PERSON_DARK, PERSON_BRIGHT = 0.7, 0.2, 0.98

# band, texture, half period of the flicker in frames
PERSON_TEXTURES = {
    "person_stands": None,
    "person_walks": ("lower", "flicker", 4),
    "person_runs": ("lower", "flicker", 1),
    "person_gestures": ("upper", "flicker", 1),
    "person_talks_on_phone": ("upper", "patch", 0),
    "person_crouches": ("lower", "patch", 0),
}


def class_group(name: str) -> str:
    if name in VEHICLE_CLASSES:
        return "vehicle"
    if name in PERSON_CLASSES:
        return "person"
    raise ValueError(f"unknown activity class {name!r}")


@dataclass
class Actor:
    obj_class: str
    activity: str | None
    t_start: int
    t_end: int
    params: dict = field(default_factory=dict)


@dataclass
class SceneScript:
    seed: int
    frame_hw: tuple[int, int]
    n_frames: int
    actors: list[Actor]
    noise_sigma: float = 2.0 / 255.0
    jitter: float = 0.0
    mirrored: bool = False
    video_id: str = "video"

    def __post_init__(self):
        self.frame_hw = tuple(self.frame_hw)
        self.actors = [a if isinstance(a, Actor) else Actor(**a) for a in self.actors]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame_hw"] = list(self.frame_hw)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneScript":
        return cls(**d)


def stable_seed(*parts) -> int:
    """Seed derived from ``parts`` by SHA-256, stable across runs and platforms."""
    h = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:4], "little")


def _round_centered(v: float, size: int) -> int:
    """Round half away from the frame center, so rounding commutes with mirroring."""
    d = v - size / 2
    return int(size / 2 + math.copysign(math.floor(abs(d) + 0.5), d))


def vehicle_offset(activity: str, length: int, speed: float, heading: float, turn: int, tau: float) -> tuple[float, float]:
    """Center displacement after ``tau`` frames of a vehicle activity lasting ``length`` frames.

    Heading 0 points up the image (negative y); positive turn rates rotate
    toward +x, so ``turn = -1`` is a left turn.
    """
    span = max(length - 1, 1)
    v = speed
    if activity in ("vehicle_turns_left", "vehicle_turns_right", "vehicle_u_turn"):
        sweep = math.pi if activity == "vehicle_u_turn" else math.pi / 2
        w = turn * sweep / span
        phi = heading + w * tau
        return (v / w) * (math.cos(heading) - math.cos(phi)), -(v / w) * (math.sin(phi) - math.sin(heading))
    if activity in ("vehicle_moves", None):
        s = v * tau if activity else 0.0
    elif activity == "vehicle_stops":
        ts = 0.75 * span
        s = v * (tau - tau * tau / (2 * ts)) if tau < ts else v * ts / 2
    elif activity == "vehicle_starts":
        ta = 0.25 * span
        s = 0.0 if tau < ta else v * (tau - ta) ** 2 / (2 * (span - ta))
    else:
        raise ValueError(f"unknown vehicle activity {activity!r}")
    return s * math.sin(heading), -s * math.cos(heading)


def actor_center(actor: Actor, t: float) -> tuple[float, float]:
    p = actor.params
    if actor.obj_class == "person" or actor.activity is None:
        return p["cx"], p["cy"]
    dx, dy = vehicle_offset(
        actor.activity, actor.t_end - actor.t_start, p["speed"], p["heading"], p.get("turn", 1), t - actor.t_start
    )
    return p["cx"] + dx, p["cy"] + dy


def person_sprite(activity: str, t_local: int, params: dict) -> np.ndarray:
    h, w = PERSON_HW
    s = np.full((h, w), PERSON_BODY)
    tex = PERSON_TEXTURES[activity]
    if tex is not None:
        band, kind, half = tex
        c = 6 if band == "upper" else 18
        r0 = c - 2 + params.get("patch_dy", 0)
        if kind == "flicker":
            state = ((t_local + params.get("phase", 0)) // half) % 2
            cols = slice(1, 5) if state == 0 else slice(5, 9)
            s[r0 : r0 + 4, cols] = PERSON_DARK
        else:
            c0 = 3 + params.get("patch_dx", 0)
            s[r0 : r0 + 4, c0 : c0 + 4] = PERSON_BRIGHT
    if params.get("flip", False):
        s = s[:, ::-1]
    return s


def actor_sprite(actor: Actor, t: int) -> np.ndarray:
    if actor.obj_class == "vehicle":
        return VEHICLE_SPRITE
    return person_sprite(actor.activity or "person_stands", t - actor.t_start, actor.params)


def actor_box(actor: Actor, t: int, frame_hw: tuple[int, int]) -> BBox:
    h, w = VEHICLE_SPRITE.shape if actor.obj_class == "vehicle" else PERSON_HW
    cx, cy = actor_center(actor, t)
    fh, fw = frame_hw
    x = _round_centered(cx, fw) - w // 2
    y = _round_centered(cy, fh) - h // 2
    return BBox(frame=t, x=float(x), y=float(y), w=float(w), h=float(h), obj_class=actor.obj_class)


def render_frame(script: SceneScript, t: int, noise: bool = True) -> tuple[np.ndarray, list[tuple[int, BBox]]]:
    """Render frame ``t``: flat background, sprites, then additive Gaussian noise.

    Returns the ``(H, W)`` float32 frame and ``(actor index, tight box)`` pairs
    for every actor on screen.
    """
    if not 0 <= t < script.n_frames:
        raise IndexError(f"frame {t} outside [0, {script.n_frames})")
    fh, fw = script.frame_hw
    frame = np.full((fh, fw), BACKGROUND)
    boxes = []
    for i, a in enumerate(script.actors):
        if not a.t_start <= t < a.t_end:
            continue
        b = actor_box(a, t, script.frame_hw)
        sprite = actor_sprite(a, t)
        y0, x0 = int(b.y), int(b.x)
        ys, xs = slice(max(y0, 0), min(y0 + sprite.shape[0], fh)), slice(max(x0, 0), min(x0 + sprite.shape[1], fw))
        frame[ys, xs] = sprite[ys.start - y0 : ys.stop - y0, xs.start - x0 : xs.stop - x0]
        boxes.append((i, b))
    if noise and script.noise_sigma > 0:
        n = np.random.default_rng([script.seed, t]).normal(0.0, script.noise_sigma, (fh, fw))
        frame = frame + (n[:, ::-1] if script.mirrored else n)
    return frame.astype(np.float32), boxes


@dataclass
class RenderedScene:
    video_id: str
    frames: np.ndarray
    detections: list[BBox]
    ground_truth: list[dict]
    truth: dict[tuple[int, float, float], int]
    """Maps each emitted detection ``(frame, x, y)`` to its actor index."""

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _jittered(box: BBox, amount: float, rng: np.random.Generator) -> BBox:
    dx, dy, dw, dh = rng.normal(0.0, amount, 4)
    return replace(box, x=box.x + dx, y=box.y + dy, w=max(box.w + dw, 1.0), h=max(box.h + dh, 1.0))


def scene_boxes(script: SceneScript) -> tuple[list[BBox], dict[tuple[int, float, float], int]]:
    """Detections (jittered when ``script.jitter > 0``) without rendering pixels."""
    dets, truth = [], {}
    for t in range(script.n_frames):
        for i, a in enumerate(script.actors):
            if a.t_start <= t < a.t_end:
                b = actor_box(a, t, script.frame_hw)
                if script.jitter > 0:
                    b = _jittered(b, script.jitter, np.random.default_rng([script.seed, 7919, t, i]))
                dets.append(b)
                truth[(b.frame, b.x, b.y)] = i
    return dets, truth


def render_scene(script: SceneScript) -> RenderedScene:
    frames = np.stack([render_frame(script, t)[0] for t in range(script.n_frames)])
    dets, truth = scene_boxes(script)
    gt = [
        {"video": script.video_id, "class": a.activity, "t0": a.t_start, "t1": a.t_end, "track": i}
        for i, a in enumerate(script.actors)
        if a.activity is not None
    ]
    return RenderedScene(script.video_id, frames, dets, gt, truth)


def mirror_script(script: SceneScript) -> SceneScript:
    """Script whose rendering is the horizontal mirror image of ``script``'s."""
    fw = script.frame_hw[1]
    actors = []
    for a in script.actors:
        p = dict(a.params)
        p["cx"] = fw - p["cx"]
        if a.obj_class == "vehicle":
            p["heading"] = -p.get("heading", 0.0)
            p["turn"] = -p.get("turn", 1)
        else:
            p["flip"] = not p.get("flip", False)
        label = MIRROR_LABELS.get(a.activity, a.activity)
        actors.append(Actor(a.obj_class, label, a.t_start, a.t_end, p))
    return replace(script, actors=actors, mirrored=not script.mirrored)


def swept_rect(actor: Actor, frame_hw: tuple[int, int]) -> tuple[float, float, float, float]:
    """Union of the actor's boxes over its lifetime as ``(x1, y1, x2, y2)``."""
    bs = [actor_box(actor, t, frame_hw) for t in range(actor.t_start, actor.t_end)]
    return min(b.x for b in bs), min(b.y for b in bs), max(b.x2 for b in bs), max(b.y2 for b in bs)


def sample_actor(
    rng: np.random.Generator,
    activity: str | None,
    obj_class: str,
    t_start: int,
    t_end: int,
    frame_hw: tuple[int, int],
    avoid: Sequence[tuple[float, float, float, float]] = (),
    border: float = 3.0,
    gap: float = 4.0,
    tries: int = 500,
    speed_range: tuple[float, float] = SPEED_RANGE,
) -> Actor:
    """Random actor whose swept box stays inside the frame and clear of ``avoid``."""
    if activity is not None and class_group(activity) != obj_class:
        raise ValueError(f"activity {activity!r} is not a {obj_class} activity")
    fh, fw = frame_hw
    params: dict = {}
    if obj_class == "vehicle":
        params["speed"] = float(rng.uniform(*speed_range)) if activity else 0.0
        params["heading"] = float(rng.uniform(-HEADING_JITTER, HEADING_JITTER))
        params["turn"] = -1 if activity == "vehicle_turns_left" else 1
        if activity == "vehicle_u_turn":
            params["turn"] = int(rng.choice([-1, 1]))
    else:
        params["phase"] = int(rng.integers(0, 8))
        params["patch_dx"] = int(rng.integers(-1, 2))
        params["patch_dy"] = int(rng.integers(-1, 2))
        params["flip"] = False
    params["cx"], params["cy"] = 0.0, 0.0
    probe = Actor(obj_class, activity, t_start, t_end, dict(params))
    x1, y1, x2, y2 = swept_rect(probe, frame_hw)
    lo_x, hi_x = border - x1, fw - border - x2
    lo_y, hi_y = border - y1, fh - border - y2
    if lo_x > hi_x or lo_y > hi_y:
        raise ValueError("activity does not fit in the frame")
    for _ in range(tries):
        params["cx"] = float(rng.uniform(lo_x, hi_x))
        params["cy"] = float(rng.uniform(lo_y, hi_y))
        r = (x1 + params["cx"], y1 + params["cy"], x2 + params["cx"], y2 + params["cy"])
        if all(r[2] + gap <= o[0] or o[2] + gap <= r[0] or r[3] + gap <= o[1] or o[3] + gap <= r[1] for o in avoid):
            return Actor(obj_class, activity, t_start, t_end, params)
    raise RuntimeError("could not place actor without overlap")


def activity_script(
    activity: str,
    seed: int,
    n_frames: int = 16,
    frame_hw: tuple[int, int] = (128, 128),
    noise_sigma: float = 2.0 / 255.0,
    video_id: str = "video",
) -> SceneScript:
    """Single-actor video whose activity spans every frame."""
    rng = np.random.default_rng(seed)
    actor = sample_actor(rng, activity, class_group(activity), 0, n_frames, frame_hw)
    return SceneScript(seed, frame_hw, n_frames, [actor], noise_sigma, video_id=video_id)


@dataclass
class SynthConfig:
    n_videos: int = 12
    classes: tuple[str, ...] = ALL_CLASSES
    noise_sigma: float = 2.0 / 255.0
    seed: int = 0
    frame_hw: tuple[int, int] = (128, 128)
    n_frames: int = 16
    val_fraction: float = 0.25
    class_weights: dict | None = None
    """Optional relative frequency per class; classes absent default to 1."""


@dataclass
class SyntheticDataset:
    scripts: list[SceneScript]
    train_idx: list[int]
    val_idx: list[int]

    def render(self, i: int) -> RenderedScene:
        return render_scene(self.scripts[i])

    def labels(self) -> list[str]:
        return [s.actors[0].activity for s in self.scripts]


def generate_dataset(config: SynthConfig) -> SyntheticDataset:
    """Single-activity videos with class counts proportional to ``class_weights``.

    Scripts are cheap; frames are rendered on demand by :meth:`SyntheticDataset.render`.
    """
    for c in config.classes:
        class_group(c)
    weights = np.array([(config.class_weights or {}).get(c, 1.0) for c in config.classes], dtype=float)
    quota = np.floor(config.n_videos * weights / weights.sum()).astype(int)
    rem = config.n_videos - quota.sum()
    quota[np.argsort(-(config.n_videos * weights / weights.sum() - quota), kind="stable")[:rem]] += 1
    labels = [c for c, q in zip(config.classes, quota) for _ in range(q)]
    order = np.random.default_rng(stable_seed(config.seed, "order")).permutation(len(labels))
    scripts = []
    for i, j in enumerate(order):
        scripts.append(
            activity_script(
                labels[j],
                stable_seed(config.seed, "video", i),
                config.n_frames,
                config.frame_hw,
                config.noise_sigma,
                video_id=f"syn{config.seed}_{i:04d}",
            )
        )
    n_val = int(round(config.val_fraction * len(scripts)))
    idx = list(range(len(scripts)))
    return SyntheticDataset(scripts, idx[n_val:], idx[:n_val])


def surveillance_script(
    seed: int,
    activities: Sequence[str],
    n_frames: int = 140,
    burn_in: int = 100,
    activity_len: int = 24,
    frame_hw: tuple[int, int] = (128, 128),
    noise_sigma: float = 2.0 / 255.0,
    parked_vehicle: bool = True,
    jitter: float = 0.0,
    video_id: str = "video",
    layout_tries: int = 20,
    speed_range: tuple[float, float] = SPEED_RANGE,
) -> SceneScript:
    """Long scene: an optional parked vehicle from frame 0, then scripted activities after ``burn_in``.

    Activity start times are staggered across the frames left after the
    burn-in. Each actor's swept box stays clear of every actor alive at the
    same time; a layout that cannot be completed is redrawn.
    """
    room = n_frames - burn_in - activity_len
    if room < 0:
        raise ValueError("scene too short for the burn-in plus one activity")
    rng = np.random.default_rng(seed)
    for _ in range(layout_tries):
        try:
            actors = _layout(rng, activities, n_frames, burn_in, activity_len, room, frame_hw, parked_vehicle, speed_range)
            break
        except RuntimeError:
            continue
    else:
        raise RuntimeError(f"no non-overlapping layout found in {layout_tries} attempts")
    return SceneScript(seed, frame_hw, n_frames, actors, noise_sigma, jitter=jitter, video_id=video_id)


def _layout(rng, activities, n_frames, burn_in, activity_len, room, frame_hw, parked_vehicle, speed_range) -> list[Actor]:
    actors: list[Actor] = []
    rects: list[tuple[float, float, float, float]] = []
    if parked_vehicle:
        a = sample_actor(rng, None, "vehicle", 0, n_frames, frame_hw)
        actors.append(a)
        rects.append(swept_rect(a, frame_hw))
    for k, act in enumerate(activities):
        t0 = burn_in + (room * k // max(len(activities) - 1, 1) if len(activities) > 1 else 0)
        # only actors sharing frames with this one need to keep clear
        live = [r for r, o in zip(rects, actors) if o.t_start < t0 + activity_len and t0 < o.t_end]
        a = sample_actor(rng, act, class_group(act), t0, t0 + activity_len, frame_hw, avoid=live, speed_range=speed_range)
        actors.append(a)
        rects.append(swept_rect(a, frame_hw))
    return actors


def save_scripts(path: str | Path, scripts: Sequence[SceneScript]) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in scripts], indent=1) + "\n")


def load_scripts(path: str | Path) -> list[SceneScript]:
    return [SceneScript.from_dict(d) for d in json.loads(Path(path).read_text())]
