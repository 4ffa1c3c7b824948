"""Model archive: a zip holding a JSON manifest plus one raw float64 payload.

Format tag "ppn-model-v1".  The manifest lists every parameter path with its
shape and byte offset into weights.bin (little-endian float64, row-major,
concatenated in manifest order), the architecture, prototype provenance, the
training-config snapshot, and normalization stats.  Round-trips are bit-exact,
which the serving and checkpoint paths rely on.
"""

from __future__ import annotations

import dataclasses
import json
import zipfile

import numpy as np

from .data import NormalizationStats
from .model import Architecture, Model

FORMAT_TAG = "ppn-model-v1"


class ArchiveError(ValueError):
    pass


def save_model(model: Model, path: str, train_config=None) -> None:
    values = model.params.values()
    entries = []
    payload = bytearray()
    for p in sorted(values):
        arr = np.asarray(values[p], dtype="<f8")  # asarray keeps 0-d shapes intact
        entries.append({"path": p, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    manifest = {
        "format": FORMAT_TAG,
        "architecture": model.arch.to_dict(),
        "parameters": entries,
        "memory": {"source_ids": list(model.memory.source_ids),
                   "last_refresh_epoch": model.memory.last_refresh_epoch,
                   "initialized": model.memory.initialized,
                   "refresh_epochs": list(model.memory.refresh_epochs)},
        "stats": model.stats.to_dict() if model.stats is not None else None,
        "train_config": dataclasses.asdict(train_config) if train_config is not None else None,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        zf.writestr("weights.bin", bytes(payload))


def load_model(path: str) -> tuple[Model, dict | None]:
    """Rebuild a model from an archive; returns (model, train-config dict)."""
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            payload = zf.read("weights.bin")
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ArchiveError(f"{path}: not a readable model archive ({exc})") from None
    if manifest.get("format") != FORMAT_TAG:
        raise ArchiveError(f"{path}: expected format {FORMAT_TAG!r}, "
                           f"got {manifest.get('format')!r}")
    model = Model(Architecture.from_dict(manifest["architecture"]))
    values = {}
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count,
                            offset=entry["offset"]).reshape(shape)
        values[entry["path"]] = arr.astype(np.float64)
    missing = set(model.params.paths()) - set(values)
    if missing:
        raise ArchiveError(f"{path}: manifest missing parameters {sorted(missing)}")
    model.params.load_values(values)
    mem = manifest["memory"]
    model.memory.source_ids = list(mem["source_ids"])
    model.memory.last_refresh_epoch = int(mem["last_refresh_epoch"])
    model.memory.initialized = bool(mem["initialized"])
    model.memory.refresh_epochs = list(mem["refresh_epochs"])
    if manifest.get("stats"):
        model.stats = NormalizationStats.from_dict(manifest["stats"])
    return model, manifest.get("train_config")
