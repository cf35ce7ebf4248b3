"""Run manifests: every CLI command records what it ran and on what.

A manifest pins the tool version, a hash of the effective configuration,
the master seed, and digests of all input files, so a run can be verified
or reproduced later.  Numeric outputs depend only on the configuration and
seed; the manifest itself carries the only timestamp.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema

MANIFEST_NAME = "manifest.json"

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["tool", "version", "command", "config_hash", "inputs", "outputs", "created_utc"],
    "properties": {
        "tool": {"const": "apidrift"},
        "version": {"type": "string"},
        "command": {"type": "string"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "master_seed": {"type": ["integer", "null"]},
        "inputs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256"],
                "properties": {
                    "path": {"type": "string"},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                },
            },
        },
        "outputs": {"type": "array", "items": {"type": "string"}},
        "created_utc": {"type": "string"},
    },
}


def tool_version() -> str:
    try:
        return metadata.version("apidrift")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(command: str, config: dict, inputs, outputs, master_seed=None) -> dict:
    return {
        "tool": "apidrift",
        "version": tool_version(),
        "command": command,
        "config_hash": config_hash(config),
        "master_seed": master_seed,
        "inputs": [{"path": str(p), "sha256": file_digest(p)} for p in inputs],
        "outputs": [str(p) for p in outputs],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def validate_manifest(manifest: dict) -> None:
    jsonschema.validate(manifest, MANIFEST_SCHEMA)


def write_manifest(out_dir, manifest: dict) -> Path:
    validate_manifest(manifest)
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
