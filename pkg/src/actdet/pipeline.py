"""File-based pipeline: generate, track, filter, train, classify, refine, score.

Each stage reads its inputs from the run directory, writes its outputs
atomically, and depends only on those inputs, the config and the seed.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import artifacts as art
from .bgfilter import BGConfig, foreground_masks, foreground_rate, rle_encode
from .clipnet import ArchConfig, TrainConfig, forward, train
from .clipnet.checkpoint import load_checkpoint, manifest_dict, payload_bytes, payload_path
from .config import PipelineConfig
from .datasets import ALL_CHANNELS, ClipGeometry, build_clip_dataset
from .motionenc import RGB_CHANNELS, ClipTensor, proposal_clips
from .refiner import Detection, refine
from .scorer import GroundTruthActivity, class_naudc, det_curve, false_alarm_time, group_report
from .synthgen import (
    ALL_CLASSES,
    SceneScript,
    activity_script,
    class_group,
    render_scene,
    scene_boxes,
    stable_seed,
    surveillance_script,
)
from .tracklet import TrackerConfig, group_by_frame, make_proposals, track_video

log = logging.getLogger(__name__)

STAGES = ("generate", "track", "filter", "train", "classify", "refine", "score")
GROUPS = ("person", "vehicle")
ABLATION_VARIANTS = (
    ("gap_only", False),
    ("gap_only", True),
    ("part_attention", False),
    ("part_attention", True),
)


def variant_name(head: str, motion: bool) -> str:
    return f"{head}/{'rgb+motion' if motion else 'rgb_only'}"


@dataclass
class Run:
    cfg: PipelineConfig
    out: Path
    jobs: int = 1
    skip_filter: bool = False
    variant: Path | None = None
    """Sub-directory for the model-dependent stages (train onward)."""

    def path(self, *parts: str) -> Path:
        return self.out.joinpath(*parts)

    def vpath(self, *parts: str) -> Path:
        return (self.variant or self.out).joinpath(*parts)

    def seed(self, *parts) -> int:
        return stable_seed(self.cfg.seed, *parts)


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def classes_of(cfg: PipelineConfig, group: str) -> tuple[str, ...]:
    return cfg.synth.person_classes if group == "person" else cfg.synth.vehicle_classes


def all_classes(cfg: PipelineConfig) -> tuple[str, ...]:
    return tuple(c for c in ALL_CLASSES if c in cfg.synth.vehicle_classes + cfg.synth.person_classes)


def geometry(cfg: PipelineConfig) -> ClipGeometry:
    p = cfg.proposals
    return ClipGeometry(p.clip_len, p.stride, p.margin, tuple(p.resized_hw), p.crop_mode, p.motion_normalizer)


# ---- generate


def eval_scripts(run: Run) -> list[SceneScript]:
    s = run.cfg.synth
    classes = list(all_classes(run.cfg))
    order = np.random.default_rng(run.seed("generate", "eval-order")).permutation(len(classes))
    classes = [classes[i] for i in order]
    scripts = []
    for k in range(s.n_eval_videos):
        acts = classes[k :: s.n_eval_videos]
        scripts.append(
            surveillance_script(
                run.seed("generate", "eval", k),
                acts,
                n_frames=s.eval_frames,
                burn_in=s.burn_in,
                activity_len=s.activity_len,
                frame_hw=tuple(s.frame_hw),
                noise_sigma=s.noise_sigma,
                parked_vehicle=True,
                jitter=s.jitter,
                video_id=f"eval_{k:02d}",
            )
        )
    return scripts


def train_scripts(run: Run) -> list[SceneScript]:
    s = run.cfg.synth
    return [
        activity_script(
            c,
            run.seed("generate", "train", c, i),
            n_frames=s.activity_len,
            frame_hw=tuple(s.frame_hw),
            noise_sigma=s.noise_sigma,
            video_id=f"train_{c}_{i:03d}",
        )
        for c in all_classes(run.cfg)
        for i in range(s.n_train_per_class)
    ]


def _render_eval(script: SceneScript) -> tuple[str, np.ndarray, list[dict], list[dict]]:
    scene = render_scene(script)
    boxes = [art.box_record(script.video_id, b) for b in scene_boxes(script)[0]]
    return script.video_id, scene.frames, boxes, scene.ground_truth


def stage_generate(run: Run) -> None:
    evals = eval_scripts(run)
    art.write_json(run.path("scripts", "train.json"), [s.to_dict() for s in train_scripts(run)])
    art.write_json(run.path("scripts", "eval.json"), [s.to_dict() for s in evals])
    boxes, gts, durations = [], [], {}
    for vid, frames, b, gt in _pmap(_render_eval, evals, run.jobs):
        art.write_clip(run.path("eval", f"{vid}.frames"), ClipTensor(frames[..., None], ("y",), (0.0, 1.0)))
        boxes += b
        gts += gt
        durations[vid] = int(frames.shape[0])
    art.write_jsonl(run.path("eval", "detections.jsonl"), boxes)
    art.write_jsonl(run.path("eval", "gt.jsonl"), gts)
    art.write_json(run.path("eval", "durations.json"), durations)


# ---- track


def stage_track(run: Run) -> None:
    recs = art.read_jsonl(run.path("eval", "detections.jsonl"), "track")
    durations = art.read_json(run.path("eval", "durations.json"), "track")
    by_video: dict[str, list] = {v: [] for v in durations}
    for r in recs:
        by_video.setdefault(r["video"], []).append(art.record_box(r))
    cfg = TrackerConfig(run.cfg.tracker.iou_min, run.cfg.tracker.min_track_len)
    out = []
    for video in sorted(by_video):
        out += art.trajectory_records(video, track_video(group_by_frame(by_video[video]), cfg))
    art.write_jsonl(run.path("track", "trajectories.jsonl"), out)


# ---- filter


def video_proposals(run: Run, trajs, frame_hw):
    p = run.cfg.proposals
    for t in trajs:
        yield from make_proposals(t, p.clip_len, p.stride, p.margin, tuple(frame_hw), tuple(p.resized_hw))


def bg_config(cfg: PipelineConfig) -> BGConfig:
    b = cfg.bgfilter
    return BGConfig(b.k, b.alpha, b.match_sigma, b.c_bg, b.w0, b.var0, b.var_min, b.var_max, b.median_k)


def _masks_job(args) -> tuple[str, list]:
    video, frames_path, bgc = args
    frames = art.read_clip(frames_path, "filter").data
    return video, foreground_masks(list(frames), bgc)


def stage_filter(run: Run) -> None:
    durations = art.read_json(run.path("eval", "durations.json"), "filter")
    trajs = art.records_to_trajectories(art.read_jsonl(run.path("track", "trajectories.jsonl"), "filter"))
    hw = tuple(run.cfg.synth.frame_hw)
    thresholds = {"vehicle": run.cfg.bgfilter.vehicle_threshold, "person": run.cfg.bgfilter.person_threshold}
    videos = sorted(durations)
    masks: dict[str, list] = {}
    if not run.skip_filter:
        jobs = [(v, run.path("eval", f"{v}.frames"), bg_config(run.cfg)) for v in videos]
        for v, m in _pmap(_masks_job, jobs, run.jobs):
            masks[v] = m
            art.write_jsonl(
                run.path("filter", "masks", f"{v}.jsonl"),
                ({"video": v, "frame": i, "h": x.shape[0], "w": x.shape[1], "rle": rle_encode(x)} for i, x in enumerate(m)),
            )
    out = []
    for v in videos:
        for p in video_proposals(run, trajs.get(v, []), hw):
            rate = None if run.skip_filter else foreground_rate(p, masks[v])
            kept = run.skip_filter or rate >= thresholds[p.obj_class]
            out.append(
                {
                    "video": v,
                    "proposal": p.proposal_id,
                    "track": p.track_id,
                    "class": p.obj_class,
                    "t0": p.t0,
                    "t1": p.t1,
                    "valid_end": p.valid_end,
                    "fg_rate": rate,
                    "kept": bool(kept),
                }
            )
    art.write_jsonl(run.path("filter", "proposals.jsonl"), out)


# ---- train


def path_settings(cfg: PipelineConfig, group: str) -> tuple[str, tuple[str, ...]]:
    m = cfg.model
    head = m.person_head if group == "person" else m.vehicle_head
    motion = m.person_motion if group == "person" else m.vehicle_motion
    return head, ALL_CHANNELS if motion else RGB_CHANNELS


def stage_train(run: Run) -> None:
    data = art.read_json(run.path("scripts", "train.json"), "train")
    scripts = [SceneScript.from_dict(d) for d in data]
    histories = {}
    for group in GROUPS:
        classes = classes_of(run.cfg, group)
        if not classes:
            continue
        mine = [s for s in scripts if s.actors[0].activity in classes]
        ds, _ = build_clip_dataset(mine, classes, geometry(run.cfg))
        head, channels = path_settings(run.cfg, group)
        ds = ds.select_channels(channels)
        m, t = run.cfg.model, run.cfg.train
        arch = ArchConfig(len(channels), len(classes), tuple(m.channels), tuple(m.kernel), tuple(map(tuple, m.strides)))
        tc = TrainConfig(t.lr, t.momentum, t.epochs, t.batch, run.seed("train", group) % 2**31, head, t.flip_augment)
        params, hist = train(ds, tc, arch)
        manifest = run.vpath("models", f"{group}.json")
        art.write_atomic(payload_path(manifest), payload_bytes(params))
        extra = {"mode": head, "channels": list(channels), "n_train_clips": len(ds)}
        art.write_json(manifest, manifest_dict(params, extra))
        histories[group] = hist
    art.write_json(run.vpath("models", "history.json"), histories)


# ---- classify


def stage_classify(run: Run) -> None:
    props = art.read_jsonl(run.path("filter", "proposals.jsonl"), "classify")
    trajs = art.records_to_trajectories(art.read_jsonl(run.path("track", "trajectories.jsonl"), "classify"))
    durations = art.read_json(run.path("eval", "durations.json"), "classify")
    models = {}
    for group in GROUPS:
        if classes_of(run.cfg, group):
            manifest = run.vpath("models", f"{group}.json")
            if not manifest.exists():
                raise art.MissingInput(manifest, "classify")
            models[group] = load_checkpoint(manifest)
    kept = {(r["video"], r["proposal"]) for r in props if r["kept"]}
    hw = tuple(run.cfg.synth.frame_hw)
    p = run.cfg.proposals
    windows = []
    for v in sorted(durations):
        frames = None
        batches: dict[str, list] = {g: [] for g in models}
        for prop in video_proposals(run, trajs.get(v, []), hw):
            if (v, prop.proposal_id) not in kept or prop.obj_class not in models:
                continue
            if frames is None:
                frames = art.read_clip(run.path("eval", f"{v}.frames"), "classify").data
            rgb, motion = proposal_clips(frames, prop, p.crop_mode, p.margin, p.motion_normalizer)
            clip = np.concatenate([rgb.data, motion.data], axis=3)
            batches[prop.obj_class].append((prop, clip))
        for group, items in batches.items():
            params, extra = models[group]
            idx = [ALL_CHANNELS.index(c) for c in extra["channels"]]
            for i in range(0, len(items), 32):
                chunk = items[i : i + 32]
                _, probs = forward(np.stack([c[..., idx] for _, c in chunk]), params, extra["mode"])
                for (prop, _), pr in zip(chunk, probs):
                    for name, s in zip(params.class_names, pr):
                        windows.append(Detection(v, name, prop.t0, prop.valid_end, float(s), prop.track_id).to_json())
    art.write_jsonl(run.vpath("classify", "windows.jsonl"), windows)


# ---- refine


def stage_refine(run: Run) -> None:
    windows = [Detection.from_json(r) for r in art.read_jsonl(run.vpath("classify", "windows.jsonl"), "refine")]
    r = run.cfg.refiner
    dets = refine(windows, tuple(r.levels), r.tiou)
    dets.sort(key=lambda d: (d.video, d.cls, str(d.track), d.t0, d.t1, -d.score))
    art.write_jsonl(run.vpath("refine", "detections.jsonl"), [d.to_json() for d in dets])


# ---- score


def score_files(
    det_path: Path,
    gt_path: Path,
    durations: dict[str, int],
    classes: Sequence[str],
    cfg: PipelineConfig,
) -> tuple[dict, str, str]:
    dets = [Detection.from_json(r) for r in art.read_jsonl(det_path, "score")]
    gts = [GroundTruthActivity.from_json(r) for r in art.read_jsonl(gt_path, "score")]
    return score_detections(dets, gts, durations, classes, cfg)


def score_detections(dets, gts, durations, classes, cfg: PipelineConfig) -> tuple[dict, str, str]:
    """Machine-readable report, plain-text report and DET-point CSV."""
    sc = cfg.scorer
    per_class = class_naudc(dets, gts, classes, durations, sc.tfa_limit, sc.align_tiou, sc.interpolation)
    groups = group_report(per_class, {c: class_group(c) for c in classes})
    fa = false_alarm_time(dets, gts, classes, sc.align_tiou)
    report = {
        "classes": [{"class": c, "naudc": per_class[c]} for c in classes],
        "groups": groups,
        "false_alarm_frames": fa,
        "n_detections": len(dets),
        "n_ground_truth": len(gts),
    }
    lines = [f"{'class':<28} nAUDC@TFA{sc.tfa_limit:g}"]
    for c in classes:
        v = per_class[c]
        lines.append(f"{c:<28} {'n/a' if v is None else f'{v:.4f}'}")
    for g, v in groups.items():
        lines.append(f"{'[' + g + ']':<28} {'n/a' if v is None else f'{v:.4f}'}")
    lines.append(f"{'false-alarm frames':<28} {fa}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "threshold", "pmiss", "tfa"])
    for c in classes:
        if per_class[c] is None:
            continue
        for pt in det_curve(dets, gts, c, durations, sc.align_tiou).points:
            w.writerow([c, "inf" if math.isinf(pt.threshold) else repr(pt.threshold), repr(pt.pmiss), repr(pt.tfa)])
    return report, "\n".join(lines) + "\n", buf.getvalue()


def stage_score(run: Run) -> dict:
    durations = art.read_json(run.path("eval", "durations.json"), "score")
    report, text, points = score_files(
        run.vpath("refine", "detections.jsonl"), run.path("eval", "gt.jsonl"), durations, all_classes(run.cfg), run.cfg
    )
    art.write_json(run.vpath("score", "report.json"), report)
    art.write_atomic(run.vpath("score", "report.txt"), text)
    art.write_atomic(run.vpath("score", "det_points.csv"), points)
    return report


STAGE_FUNCS = {
    "generate": stage_generate,
    "track": stage_track,
    "filter": stage_filter,
    "train": stage_train,
    "classify": stage_classify,
    "refine": stage_refine,
    "score": stage_score,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_stage(name: str, run: Run):
    if name not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {name!r}")
    log.info("stage %s", name)
    return STAGE_FUNCS[name](run)


def run_all(run: Run) -> dict:
    """Every stage in order; returns the score report."""
    art.write_atomic(run.path("config.json"), run.cfg.dumps())
    report = None
    for name in STAGES:
        try:
            report = run_stage(name, run)
        except (art.MissingInput, StageError):
            raise
        except Exception as e:
            raise StageError(name, e) from e
    return report


# ---- ablation


def ablation_config(cfg: PipelineConfig, head: str, motion: bool) -> PipelineConfig:
    model = dataclasses.replace(cfg.model, person_head=head, vehicle_head=head, person_motion=motion, vehicle_motion=motion)
    return dataclasses.replace(cfg, model=model)


def ablation_table(reports: dict[str, dict], classes: Sequence[str]) -> tuple[dict, str]:
    cols = [variant_name(h, m) for h, m in ABLATION_VARIANTS]
    rows = []
    for c in classes:
        rows.append({"row": c, **{k: next(x["naudc"] for x in reports[k]["classes"] if x["class"] == c) for k in cols}})
    for g in reports[cols[0]]["groups"]:
        rows.append({"row": f"[{g}]", **{k: reports[k]["groups"][g] for k in cols}})
    width = max(len(c) for c in cols) + 2
    lines = [f"{'nAUDC':<28}" + "".join(f"{c:>{width}}" for c in cols)]
    for r in rows:
        cells = "".join(f"{'n/a' if r[k] is None else f'{r[k]:.4f}':>{width}}" for k in cols)
        lines.append(f"{r['row']:<28}{cells}")
    return {"columns": cols, "rows": rows}, "\n".join(lines) + "\n"


def run_ablation(run: Run) -> dict:
    """Shared data stages once, then train through score for each head × input variant."""
    art.write_atomic(run.path("config.json"), run.cfg.dumps())
    for name in ("generate", "track", "filter"):
        run_stage(name, run)
    reports = {}
    for head, motion in ABLATION_VARIANTS:
        key = variant_name(head, motion)
        sub = Run(ablation_config(run.cfg, head, motion), run.out, run.jobs, run.skip_filter,
                  run.path("ablation", key.replace("/", "__").replace("+", "_")))
        for name in ("train", "classify", "refine"):
            run_stage(name, sub)
        reports[key] = run_stage("score", sub)
    table, text = ablation_table(reports, all_classes(run.cfg))
    art.write_json(run.path("ablation", "table.json"), table)
    art.write_atomic(run.path("ablation", "table.txt"), text)
    return table
