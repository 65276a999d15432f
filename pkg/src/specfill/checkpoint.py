"""Checkpoint directories: ``manifest.json`` plus a little-endian float32 blob.

The manifest lists every array with its shape, dtype and byte offset into
``tensors.bin``, and embeds the run configuration and free-form metadata, so a
checkpoint is self-describing. Saving is deterministic: the same state always
produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .networks import ModelParams
from .optim import OptimizerState

MANIFEST = "manifest.json"
BLOB = "tensors.bin"
FORMAT = "specfill-checkpoint/1"


class CheckpointError(RuntimeError):
    pass


def write_arrays(path: Path, arrays: dict[str, np.ndarray], header: dict) -> None:
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = dict(header, format=FORMAT, tensors=entries, sha256=hashlib.sha256(blob).hexdigest())
    tmp_blob, tmp_manifest = path / (BLOB + ".tmp"), path / (MANIFEST + ".tmp")
    tmp_blob.write_bytes(blob)
    tmp_manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp_blob, path / BLOB)
    os.replace(tmp_manifest, path / MANIFEST)


def read_arrays(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
        blob = (path / BLOB).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint incomplete: {exc.filename} missing") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt manifest in {path}: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}")
    if hashlib.sha256(blob).hexdigest() != manifest.get("sha256"):
        raise CheckpointError(f"{path}: tensor blob does not match manifest checksum")
    arrays = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if entry["dtype"] != "float32" or entry["nbytes"] != nbytes:
            raise CheckpointError(f"{entry['name']}: declared shape {shape} does not match {entry['nbytes']} bytes")
        start = entry["offset"]
        if start + nbytes > len(blob):
            raise CheckpointError(f"{entry['name']}: data runs past end of blob")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=start).reshape(shape).astype(np.float32)
    return arrays, manifest


def save_checkpoint(
    path,
    params: ModelParams,
    state: OptimizerState | None = None,
    config: dict | None = None,
    meta: dict | None = None,
) -> None:
    arrays = {f"param/{k}": v for k, v in params.arrays().items()}
    header: dict = {"config": config or {}, "meta": meta or {}}
    if state is not None:
        arrays.update({f"opt_m/{k}": v for k, v in state.m.items()})
        arrays.update({f"opt_s/{k}": v for k, v in state.s.items()})
        header["optimizer"] = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "t": state.t}
    write_arrays(Path(path), arrays, header)


def load_checkpoint(path, params: ModelParams) -> tuple[OptimizerState | None, dict]:
    """Load arrays into ``params`` (shapes must match) and return (optimizer state, manifest)."""
    arrays, manifest = read_arrays(Path(path))
    model = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")}
    try:
        params.load_arrays(model)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    state = None
    if "optimizer" in manifest:
        o = manifest["optimizer"]
        state = OptimizerState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"])
        state.m = {k.split("/", 1)[1]: v.copy() for k, v in arrays.items() if k.startswith("opt_m/")}
        state.s = {k.split("/", 1)[1]: v.copy() for k, v in arrays.items() if k.startswith("opt_s/")}
        try:
            state.ensure(params.tensors)
        except ValueError as exc:
            raise CheckpointError(f"{path}: {exc}") from None
    return state, manifest
