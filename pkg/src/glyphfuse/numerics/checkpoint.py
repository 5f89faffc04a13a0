"""Flat fp32 checkpoint files with a JSON manifest.

``<stem>.bin`` holds little-endian float32 arrays back to back;
``<stem>.json`` lists name, shape and byte offset for each.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DimensionError

_DTYPE = np.dtype("<f4")


def save_arrays(stem, arrays):
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for name, arr in arrays.items():
            raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
            entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
            fh.write(raw)
            offset += len(raw)
    manifest = {"dtype": "float32-le", "total_bytes": offset, "entries": entries}
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_arrays(stem):
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    blob = stem.with_suffix(".bin").read_bytes()
    if len(blob) != manifest["total_bytes"]:
        raise DimensionError(f"{stem}: expected {manifest['total_bytes']} bytes, found {len(blob)}")
    out = {}
    for entry in manifest["entries"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=entry["offset"])
        out[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    return out


def save_module(stem, module):
    save_arrays(stem, module.state_dict())


def load_module(stem, module):
    module.load_state_dict(load_arrays(stem))
    return module
