"""Model checkpoints: a JSON manifest next to a raw little-endian float32 payload."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ArchConfig, ModelParams, param_names


def payload_path(manifest: str | Path) -> Path:
    return Path(manifest).with_suffix(".f32")


def manifest_dict(params: ModelParams, extra: dict | None = None) -> dict:
    names = param_names(params.arch)
    return {
        "arch": params.arch.to_dict(),
        "class_names": list(params.class_names),
        "seed": params.seed,
        "epoch": params.epoch,
        "dtype": "float32",
        "byte_order": "little",
        "params": [{"name": n, "shape": list(params.arrays[n].shape)} for n in names],
        "extra": extra or {},
    }


def payload_bytes(params: ModelParams) -> bytes:
    return b"".join(
        np.ascontiguousarray(params.arrays[n], dtype="<f4").tobytes() for n in param_names(params.arch)
    )


def save_checkpoint(params: ModelParams, manifest: str | Path, extra: dict | None = None) -> None:
    manifest = Path(manifest)
    payload_path(manifest).write_bytes(payload_bytes(params))
    manifest.write_text(json.dumps(manifest_dict(params, extra), indent=1, sort_keys=True) + "\n")


def load_checkpoint(manifest: str | Path) -> tuple[ModelParams, dict]:
    """Returns the parameters (float32) and the manifest's ``extra`` block."""
    manifest = Path(manifest)
    m = json.loads(manifest.read_text())
    if m.get("dtype") != "float32" or m.get("byte_order") != "little":
        raise ValueError(f"unsupported checkpoint encoding in {manifest}")
    a = m["arch"]
    arch = ArchConfig(a["in_channels"], a["n_classes"], tuple(a["channels"]), tuple(a["kernel"]), tuple(map(tuple, a["strides"])))
    expected = param_names(arch)
    if [p["name"] for p in m["params"]] != expected:
        raise ValueError(f"{manifest}: parameter list does not match the architecture")
    raw = np.frombuffer(payload_path(manifest).read_bytes(), dtype="<f4")
    total = sum(int(np.prod(p["shape"])) for p in m["params"])
    if raw.size != total:
        raise ValueError(f"{payload_path(manifest)} holds {raw.size} values, manifest declares {total}")
    arrays, off = {}, 0
    for p in m["params"]:
        n = int(np.prod(p["shape"]))
        arrays[p["name"]] = raw[off : off + n].reshape(p["shape"]).astype(np.float32)
        off += n
    params = ModelParams(arch, arrays, m["seed"], m["epoch"], tuple(m["class_names"]))
    return params, m.get("extra", {})
