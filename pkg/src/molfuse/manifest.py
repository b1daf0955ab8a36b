"""Run manifests: a JSON record of everything needed to reproduce a run.

A manifest carries the verbatim config text, the parsed config, the single
seed all randomness flows from, content hashes of every input file, and
the result numbers. Re-running from a manifest must reproduce the metrics
exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

FORMAT = "molfuse-manifest-v1"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(kind: str, seed: int, config: Mapping[str, Any],
                   config_text: str, inputs: Mapping[str, str | Path],
                   results: Mapping[str, Any],
                   outputs: Mapping[str, str] | None = None) -> dict[str, Any]:
    return {
        "format": FORMAT,
        "kind": kind,
        "seed": seed,
        "config": dict(config),
        "config_text": config_text,
        "inputs": {name: str(path) for name, path in inputs.items()},
        "input_hashes": {name: file_sha256(path) for name, path in inputs.items()},
        "results": dict(results),
        "outputs": dict(outputs or {}),
    }


def write_manifest(path: str | Path, manifest: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> dict[str, Any]:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"not a run manifest: {path}")
    return manifest
