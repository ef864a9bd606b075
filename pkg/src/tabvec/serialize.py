"""Versioned JSON envelope shared by every fitted model."""

from __future__ import annotations

import json
from pathlib import Path

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def envelope(kind: str, state: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "state": state}


def open_envelope(doc: dict, kind: str) -> dict:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} document, got {doc.get('kind')!r}")
    return doc["state"]


def dump(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), sort_keys=True), encoding="utf-8")


def load(cls, path):
    return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
