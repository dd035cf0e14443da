"""Deterministic result files and their run manifests.

Result files are pure functions of (command, config, seed, code version):
floats are written with 12 significant digits, keys are sorted, and no
timestamps or durations appear in them, so identical runs are byte-identical.
Each result file references its manifest; the manifest (written next to the
result) records the resolved configuration, seed, version, wall-clock
duration and the SHA-256 digest of every result file it covers.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

__all__ = ["RunManifest", "fmt12", "round12", "write_result_csv",
           "write_result_json", "write_manifest"]


def fmt12(v) -> str:
    """12-significant-digit rendering used for all floating-point output."""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def round12(obj):
    """Round floats (recursively) to 12 significant digits for JSON output."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round12(v) for v in obj]
    return obj


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    duration_s: float = 0.0
    outputs: dict = field(default_factory=dict)   # path -> sha256

    def deterministic_part(self) -> dict:
        return {"command": self.command, "config": round12(self.config),
                "seed": self.seed, "version": self.version}


def manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


def write_result_csv(path: str, header, rows, manifest_ref: str | None = None):
    ref = manifest_ref or os.path.basename(manifest_path(path))
    lines = [f"# manifest: {ref}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt12(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_result_json(path: str, payload: dict, manifest_ref: str | None = None):
    ref = manifest_ref or os.path.basename(manifest_path(path))
    doc = {"manifest_ref": ref}
    doc.update(round12(payload))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_path: str, manifest: RunManifest, result_paths):
    manifest.outputs = {os.path.basename(p): _sha256(p) for p in result_paths}
    doc = asdict(manifest)
    doc["config"] = round12(doc["config"])
    doc["duration_s"] = round(manifest.duration_s, 3)
    path = manifest_path(out_path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
