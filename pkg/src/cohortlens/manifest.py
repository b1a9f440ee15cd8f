"""Run manifests: what was run, on which inputs, with which seeds.

Every output directory gets exactly one manifest.  Timing and host facts live
here and only here, so the analytical outputs next to it can stay
byte-for-byte reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    tool: str
    version: str
    command: tuple[str, ...]
    out_dir: str
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    seeds: dict[str, int] = field(default_factory=dict)
    elapsed_seconds: float | None = None
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool": self.tool,
            "version": self.version,
            "command": list(self.command),
            "out_dir": self.out_dir,
            "inputs": {k: self.inputs[k] for k in sorted(self.inputs)},
            "seeds": {k: self.seeds[k] for k in sorted(self.seeds)},
            "elapsed_seconds": self.elapsed_seconds,
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunManifest":
        if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported manifest schema version {doc.get('schema_version')!r}"
            )
        return cls(
            tool=doc["tool"],
            version=doc["version"],
            command=tuple(doc["command"]),
            out_dir=doc["out_dir"],
            inputs=dict(doc["inputs"]),
            seeds={k: int(v) for k, v in doc["seeds"].items()},
            elapsed_seconds=doc.get("elapsed_seconds"),
            notes=tuple(doc.get("notes", ())),
        )


def hash_inputs(paths: list[str | Path]) -> dict[str, str]:
    out: dict[str, str] = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def read_manifest(path: str | Path) -> RunManifest:
    with open(path, encoding="utf-8") as handle:
        return RunManifest.from_json(json.load(handle))
