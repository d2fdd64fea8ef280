import json

import pytest

from formtwin.errors import SchemaError
from formtwin.manifest import RunManifest, content_hash, defaults


def test_defaults_build_typed_views():
    m = RunManifest()
    assert m.seed == 0 and m.plant.seed == 0 and m.train_config.seed == 0
    assert m.mpc_spec.horizon == 6 and m.envelope_margin == 0.1
    assert m.triggers.deviation_threshold == 3.0


def test_partial_override_merges_nested_keys():
    m = RunManifest({"seed": 4, "train": {"epochs": 3}, "validation": {"replicates": 2}})
    assert m.train_config.epochs == 3 and m.train_config.lifted_dim == 256
    assert m.train_config.seed == 4 and m.plant.seed == 4
    assert m.doc["validation"]["replicates"] == 2


def test_unknown_and_invalid_keys_rejected():
    with pytest.raises(SchemaError, match="train.epoch"):
        RunManifest({"train": {"epoch": 3}})
    with pytest.raises(SchemaError):
        RunManifest({"train": {"rollout": 0}})
    with pytest.raises(SchemaError):
        RunManifest({"validation": {"replicates": 0}})
    with pytest.raises(SchemaError, match="must be an object"):
        RunManifest({"train": 3})


def test_save_load_round_trip_and_hash(tmp_path):
    m = RunManifest({"seed": 2})
    path = tmp_path / "m.json"
    m.save(path)
    back = RunManifest.load(path)
    assert back.hash == m.hash and back.to_dict() == m.to_dict()
    doc = json.loads(path.read_text())
    doc["seed"] = 3
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="content hash"):
        RunManifest.load(path)
    del doc["content_hash"]
    path.write_text(json.dumps(doc))
    assert RunManifest.load(path).seed == 3


def test_load_errors(tmp_path):
    with pytest.raises(SchemaError, match="does not exist"):
        RunManifest.load(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(SchemaError, match="not valid JSON"):
        RunManifest.load(bad)
    bad.write_text("[1]")
    with pytest.raises(SchemaError):
        RunManifest.load(bad)


def test_hash_ignores_key_order_and_hash_field():
    d = defaults()
    shuffled = dict(reversed(list(d.items())))
    assert content_hash(d) == content_hash(shuffled) == content_hash({**d, "content_hash": "x"})
    assert RunManifest().with_seed(5).seed == 5
