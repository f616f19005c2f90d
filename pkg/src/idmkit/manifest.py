"""Run manifests: hashes of inputs and outputs for reproducibility claims."""

from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

from . import __version__

MANIFEST_NAME = "run_manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command: str, inputs: dict | None = None,
                   seed: int | None = None, extra: dict | None = None) -> Path:
    """Write the single manifest of an output directory.

    Records the command, sha256 of every input and of every file already
    written to ``out_dir``, the seed, the tool version, and timestamps.
    Two runs are declared byte-reproducible when their output-hash maps
    match (timestamps naturally differ).
    """
    out_dir = Path(out_dir)
    outputs = {
        p.name: sha256_file(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != MANIFEST_NAME
    }
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "inputs": {name: sha256_file(path) for name, path in (inputs or {}).items()},
        "outputs": outputs,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(out_dir) -> dict:
    with open(Path(out_dir) / MANIFEST_NAME, "r", encoding="utf-8") as fh:
        return json.load(fh)
