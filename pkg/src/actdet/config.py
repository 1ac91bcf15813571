"""Pipeline configuration: one JSON file, strict keys, range-checked at load."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .synthgen import PERSON_CLASSES, VEHICLE_CLASSES


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class SynthSection:
    n_eval_videos: int = 3
    n_train_per_class: int = 24
    frame_hw: tuple[int, int] = (128, 128)
    eval_frames: int = 160
    burn_in: int = 100
    activity_len: int = 24
    noise_sigma: float = 2.0 / 255.0
    jitter: float = 0.0
    vehicle_classes: tuple[str, ...] = VEHICLE_CLASSES
    person_classes: tuple[str, ...] = PERSON_CLASSES


@dataclass
class TrackerSection:
    iou_min: float = 0.3
    min_track_len: int = 8


@dataclass
class ProposalSection:
    clip_len: int = 16
    stride: int = 8
    margin: float = 1.5
    resized_hw: tuple[int, int] = (32, 32)
    crop_mode: str = "track"
    motion_normalizer: tuple[float, float] | None = (4.0, 4.0)
    """Pixels per frame mapped to 1.0 in the motion clip; ``null`` uses the frame size."""


@dataclass
class FilterSection:
    k: int = 4
    alpha: float = 0.005
    match_sigma: float = 3.0
    c_bg: float = 0.9
    w0: float = 0.05
    var0: float = 225.0
    var_min: float = 4.0
    var_max: float = 1125.0
    median_k: int = 3
    vehicle_threshold: float = 0.15
    person_threshold: float = 0.05


@dataclass
class ModelSection:
    channels: tuple[int, ...] = (16, 32)
    kernel: tuple[int, int, int] = (3, 3, 3)
    strides: tuple[tuple[int, int, int], ...] = ((2, 2, 2), (1, 2, 2))
    person_head: str = "part_attention"
    vehicle_head: str = "gap_only"
    person_motion: bool = False
    vehicle_motion: bool = True


@dataclass
class TrainSection:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 10
    batch: int = 16
    flip_augment: bool = True


@dataclass
class RefinerSection:
    levels: tuple[float, ...] = (0.3, 0.5, 0.7)
    tiou: float = 0.5


@dataclass
class ScorerSection:
    tfa_limit: float = 0.2
    align_tiou: float = 0.2
    interpolation: str = "step"


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "run"
    synth: SynthSection = field(default_factory=SynthSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    proposals: ProposalSection = field(default_factory=ProposalSection)
    bgfilter: FilterSection = field(default_factory=FilterSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    refiner: RefinerSection = field(default_factory=RefinerSection)
    scorer: ScorerSection = field(default_factory=ScorerSection)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _coerce(value: Any, default: Any, path: str):
    """Coerce a JSON value to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if default and all(isinstance(d, tuple) for d in default):
            return tuple(_coerce(v, default[0], f"{path}[{i}]") for i, v in enumerate(value))
        proto = default[0] if default else value[0] if value else 0
        return tuple(_coerce(v, proto, f"{path}[{i}]") for i, v in enumerate(value))
    raise ConfigError(path, "unsupported field type")


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    proto = cls()
    for name, f in fields.items():
        if name not in data:
            continue
        sub = f"{path}.{name}" if path else name
        default = getattr(proto, name)
        value = data[name]
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        elif default is None or (name == "motion_normalizer" and value is None):
            kwargs[name] = None if value is None else _coerce(value, (1.0, 1.0), sub)
        else:
            kwargs[name] = _coerce(value, default, sub)
    return cls(**kwargs)


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def validate(cfg: PipelineConfig) -> PipelineConfig:
    s, tr, pr, bf, m, tn, rf, sc = (
        cfg.synth, cfg.tracker, cfg.proposals, cfg.bgfilter, cfg.model, cfg.train, cfg.refiner, cfg.scorer
    )
    _check(cfg.seed >= 0, "seed", "must be >= 0")
    _check(s.n_eval_videos >= 1, "synth.n_eval_videos", "must be >= 1")
    _check(s.n_train_per_class >= 1, "synth.n_train_per_class", "must be >= 1")
    _check(len(s.frame_hw) == 2 and min(s.frame_hw) >= 32, "synth.frame_hw", "must be two sizes >= 32")
    _check(0 <= s.burn_in and s.burn_in + s.activity_len <= s.eval_frames, "synth.burn_in", "burn-in plus one activity must fit in eval_frames")
    _check(s.activity_len >= 2, "synth.activity_len", "must be >= 2")
    _check(s.noise_sigma >= 0, "synth.noise_sigma", "must be >= 0")
    _check(s.jitter >= 0, "synth.jitter", "must be >= 0")
    for name in ("vehicle_classes", "person_classes"):
        allowed = VEHICLE_CLASSES if name == "vehicle_classes" else PERSON_CLASSES
        for i, c in enumerate(getattr(s, name)):
            _check(c in allowed, f"synth.{name}[{i}]", f"unknown class {c!r}")
    _check(0 < tr.iou_min <= 1, "tracker.iou_min", "must lie in (0, 1]")
    _check(tr.min_track_len >= 1, "tracker.min_track_len", "must be >= 1")
    _check(pr.clip_len >= 2, "proposals.clip_len", "must be >= 2")
    _check(pr.stride >= 1, "proposals.stride", "must be >= 1")
    _check(pr.margin >= 1.0, "proposals.margin", "must be >= 1")
    _check(len(pr.resized_hw) == 2 and min(pr.resized_hw) >= 4, "proposals.resized_hw", "must be two sizes >= 4")
    _check(pr.crop_mode in ("track", "union"), "proposals.crop_mode", "must be 'track' or 'union'")
    if pr.motion_normalizer is not None:
        _check(len(pr.motion_normalizer) == 2 and min(pr.motion_normalizer) > 0, "proposals.motion_normalizer", "must be two positive numbers or null")
    _check(bf.k >= 1, "bgfilter.k", "must be >= 1")
    _check(0 < bf.alpha < 1, "bgfilter.alpha", "must lie in (0, 1)")
    _check(bf.match_sigma > 0, "bgfilter.match_sigma", "must be > 0")
    _check(0 < bf.c_bg <= 1, "bgfilter.c_bg", "must lie in (0, 1]")
    _check(0 < bf.w0 < 1, "bgfilter.w0", "must lie in (0, 1)")
    _check(0 < bf.var_min <= bf.var0 <= bf.var_max, "bgfilter.var0", "need 0 < var_min <= var0 <= var_max")
    _check(bf.median_k >= 1 and bf.median_k % 2 == 1, "bgfilter.median_k", "must be odd")
    _check(0 <= bf.vehicle_threshold <= 1, "bgfilter.vehicle_threshold", "must lie in [0, 1]")
    _check(0 <= bf.person_threshold <= 1, "bgfilter.person_threshold", "must lie in [0, 1]")
    _check(len(m.channels) >= 1 and min(m.channels) >= 1, "model.channels", "need at least one positive width")
    _check(len(m.strides) == len(m.channels), "model.strides", "need one stride triple per layer")
    _check(len(m.kernel) == 3 and all(k % 2 == 1 for k in m.kernel), "model.kernel", "must be three odd sizes")
    for name in ("person_head", "vehicle_head"):
        _check(getattr(m, name) in ("part_attention", "gap_only"), f"model.{name}", "must be 'part_attention' or 'gap_only'")
    _check(tn.lr >= 0, "train.lr", "must be >= 0")
    _check(0 <= tn.momentum < 1, "train.momentum", "must lie in [0, 1)")
    _check(tn.epochs >= 0, "train.epochs", "must be >= 0")
    _check(tn.batch >= 1, "train.batch", "must be >= 1")
    _check(len(rf.levels) >= 1 and all(0 < v < 1 for v in rf.levels), "refiner.levels", "need values in (0, 1)")
    _check(0 < rf.tiou < 1, "refiner.tiou", "must lie in (0, 1)")
    _check(0 < sc.tfa_limit <= 1, "scorer.tfa_limit", "must lie in (0, 1]")
    _check(0 < sc.align_tiou <= 1, "scorer.align_tiou", "must lie in (0, 1]")
    _check(sc.interpolation in ("step", "trapezoid"), "scorer.interpolation", "must be 'step' or 'trapezoid'")
    return cfg


def from_dict(data: dict) -> PipelineConfig:
    return validate(_build(PipelineConfig, data, ""))


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return validate(PipelineConfig())
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return from_dict(data)
