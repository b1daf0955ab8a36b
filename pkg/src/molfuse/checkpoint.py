"""Parameter checkpoints: flat binary payload plus a JSON manifest.

The ``.bin`` file is the concatenation of each parameter's little-endian
float64 payload; the ``.json`` manifest records names, shapes and byte
offsets plus free-form metadata. Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

FORMAT = "molfuse-params-v1"


def save_checkpoint(path: str | Path, arrays: Mapping[str, np.ndarray],
                    metadata: dict[str, Any] | None = None) -> Path:
    """Write ``path``.bin/.json (the suffix of ``path`` is replaced)."""
    base = Path(path)
    bin_path = base.with_suffix(".bin")
    records = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, arr in arrays.items():
            payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            fh.write(payload)
            records.append({
                "name": name,
                "shape": list(arr.shape),
                "offset": offset,
                "byte_length": len(payload),
            })
            offset += len(payload)
    manifest = {
        "format": FORMAT,
        "records": records,
        "metadata": metadata or {},
    }
    manifest_path = base.with_suffix(".json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return base


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    base = Path(path)
    manifest = json.loads(base.with_suffix(".json").read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"not a parameter checkpoint: {base}")
    blob = base.with_suffix(".bin").read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for rec in manifest["records"]:
        start, length = rec["offset"], rec["byte_length"]
        flat = np.frombuffer(blob[start : start + length], dtype="<f8")
        arrays[rec["name"]] = flat.reshape(rec["shape"]).astype(np.float64).copy()
    return arrays, manifest["metadata"]
