import json
import zipfile

import numpy as np
import pytest

from ppn import archive, training
from ppn.archive import ArchiveError
from ppn.training import TrainConfig


def test_round_trip_bit_identical(tmp_path, tiny_model):
    model, ds = tiny_model
    path = tmp_path / "model.ppn"
    archive.save_model(model, str(path))
    loaded, config = archive.load_model(str(path))
    assert config is None
    assert loaded.arch == model.arch
    for p, node in model.params.items():
        assert np.array_equal(loaded.params[p].value, node.value)
        assert loaded.params[p].value.shape == node.value.shape
    assert loaded.memory.source_ids == model.memory.source_ids
    for rec in ds.records[:5]:
        a, b = model.predict(rec), loaded.predict(rec)
        assert a.risk == b.risk
        assert np.array_equal(a.similarities, b.similarities)


def test_round_trip_carries_stats_and_config(tmp_path, synth_splits):
    tr_n, va_n, _, _ = synth_splits
    config = TrainConfig(k=2, hidden=3, epochs=1, refresh_epochs=(), seed=1)
    model, _ = training.train(config, tr_n, va_n)
    path = tmp_path / "model.ppn"
    archive.save_model(model, str(path), train_config=config)
    loaded, config_dict = archive.load_model(str(path))
    assert config_dict["k"] == 2 and config_dict["seed"] == 1
    assert loaded.stats is not None
    raw = synth_splits[3].records[0]
    assert loaded.predict(loaded.prepare_record(raw)).risk == \
        model.predict(model.prepare_record(raw)).risk


def test_manifest_covers_every_parameter(tmp_path, tiny_model):
    model, _ = tiny_model
    path = tmp_path / "model.ppn"
    archive.save_model(model, str(path))
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        payload = zf.read("weights.bin")
    assert manifest["format"] == "ppn-model-v1"
    listed = [e["path"] for e in manifest["parameters"]]
    assert sorted(listed) == sorted(model.params.paths())
    total = sum(int(np.prod(e["shape"])) if e["shape"] else 1
                for e in manifest["parameters"])
    assert len(payload) == 8 * total   # packed little-endian float64, no gaps


def test_missing_parameter_rejected(tmp_path, tiny_model):
    model, _ = tiny_model
    path = tmp_path / "model.ppn"
    archive.save_model(model, str(path))
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        payload = zf.read("weights.bin")
    dropped = [e for e in manifest["parameters"] if e["path"] != "head/bias"]
    manifest["parameters"] = dropped
    clipped = tmp_path / "clipped.ppn"
    with zipfile.ZipFile(clipped, "w") as zf:
        zf.writestr("manifest.json", json.dumps(manifest))
        zf.writestr("weights.bin", payload)
    with pytest.raises(ArchiveError, match="head/bias"):
        archive.load_model(str(clipped))


def test_wrong_format_tag_rejected(tmp_path):
    path = tmp_path / "bad.ppn"
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("manifest.json", json.dumps({"format": "ppn-model-v2"}))
        zf.writestr("weights.bin", b"")
    with pytest.raises(ArchiveError, match="ppn-model-v1"):
        archive.load_model(str(path))


def test_not_a_zip_rejected(tmp_path):
    path = tmp_path / "junk.ppn"
    path.write_bytes(b"definitely not a zip")
    with pytest.raises(ArchiveError):
        archive.load_model(str(path))


def test_missing_member_rejected(tmp_path):
    path = tmp_path / "empty.ppn"
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("readme.txt", "nothing here")
    with pytest.raises(ArchiveError):
        archive.load_model(str(path))
