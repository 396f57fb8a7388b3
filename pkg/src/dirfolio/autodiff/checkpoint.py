"""Single-file checkpoints.

Layout (little-endian)::

    8 bytes   magic b"DIRFCKPT"
    u32       format version
    u64       header length H
    H bytes   UTF-8 JSON header:
                {"meta": {...},
                 "arrays": [{"name": str, "shape": [...], "offset": int}, ...]}
    ...       float64 payload; each array starts ``offset`` bytes after the
              end of the header, C order

Array names are ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``;
the Adam step counter and any configs live in ``meta``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import VersionError

MAGIC = b"DIRFCKPT"
VERSION = 1


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name in arrays:
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": dict(meta or {}), "arrays": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise VersionError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, expected {VERSION}")
    header = json.loads(raw[20 : 20 + hlen])
    base = 20 + hlen
    arrays = {}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=base + e["offset"])
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return arrays, header["meta"]


def save_checkpoint(path, module, store=None, meta: Mapping | None = None) -> Path:
    arrays = {f"param/{k}": v for k, v in module.state_dict().items()}
    meta = dict(meta or {})
    if store is not None:
        for k in store.params:
            arrays[f"adam_m/{k}"] = store.m[k]
            arrays[f"adam_v/{k}"] = store.v[k]
        meta["adam_step"] = store.step
    return save_arrays(path, arrays, meta)


def load_checkpoint(path, module=None, store=None) -> dict:
    arrays, meta = load_arrays(path)
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param/")}
    if module is not None:
        try:
            module.load_state_dict(params)
        except (KeyError, ValueError) as exc:
            raise VersionError(f"{path}: incompatible with this model ({exc})") from exc
    if store is not None and "adam_step" in meta:
        store.load_state(
            {
                "m": {k: arrays[f"adam_m/{k}"] for k in store.params},
                "v": {k: arrays[f"adam_v/{k}"] for k in store.params},
                "step": meta["adam_step"],
            }
        )
    return meta
