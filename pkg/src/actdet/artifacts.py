"""On-disk artifacts: atomic writes, JSON-lines records, clip tensors and box records."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

from .motionenc import ClipTensor, sidecar
from .tracklet import BBox, Trajectory


class MissingInput(FileNotFoundError):
    def __init__(self, path: str | Path, stage: str | None = None):
        self.path = str(path)
        self.stage = stage
        who = f"{stage}: " if stage else ""
        super().__init__(f"{who}missing input artifact {self.path}")


def write_atomic(path: str | Path, data: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    write_atomic(path, dumps_json(obj))


def read_json(path: str | Path, stage: str | None = None):
    path = Path(path)
    if not path.exists():
        raise MissingInput(path, stage)
    return json.loads(path.read_text())


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    write_atomic(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def read_jsonl(path: str | Path, stage: str | None = None) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path, stage)
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_clip(path: str | Path, clip: ClipTensor) -> None:
    path = Path(path)
    write_atomic(path, clip.payload())
    write_atomic(sidecar(path), json.dumps(clip.header(), indent=1) + "\n")


def read_clip(path: str | Path, stage: str | None = None) -> ClipTensor:
    path = Path(path)
    for p in (path, sidecar(path)):
        if not p.exists():
            raise MissingInput(p, stage)
    return ClipTensor.load(path)


def box_record(video: str, b: BBox, track: int | None = None) -> dict:
    r = {"video": video, "frame": b.frame, "x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": b.score, "class": b.obj_class}
    if track is not None:
        r["track"] = track
    return r


def record_box(r: dict) -> BBox:
    return BBox(int(r["frame"]), float(r["x"]), float(r["y"]), float(r["w"]), float(r["h"]), float(r.get("score", 1.0)), r["class"])


def trajectory_records(video: str, trajs: Iterable[Trajectory]) -> list[dict]:
    return [box_record(video, b, t.track_id) for t in trajs for b in t.boxes]


def records_to_trajectories(records: Iterable[dict]) -> dict[str, list[Trajectory]]:
    """Group box records that carry a ``track`` field into trajectories per video."""
    grouped: dict[str, dict[int, list[BBox]]] = {}
    for r in records:
        grouped.setdefault(r["video"], {}).setdefault(int(r["track"]), []).append(record_box(r))
    out = {}
    for video, tracks in grouped.items():
        out[video] = [
            Trajectory(tid, boxes[0].obj_class, sorted(boxes, key=lambda b: b.frame))
            for tid, boxes in sorted(tracks.items())
        ]
    return out
