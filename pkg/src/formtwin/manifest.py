"""Run manifest: every setting of a pipeline run in one JSON document.

All defaults live here and are dumped by ``formtwin --print-defaults``.  The
content hash covers the canonical serialization minus the hash field itself,
so it is stable under re-serialization.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from . import __version__
from .adapt import DEFAULT_LAMBDA, DEFAULT_P0, AdaptTriggers
from .errors import SchemaError
from .koopman import TrainConfig
from .mpc import MpcSpec
from .plant import PlantParams

ARTIFACTS = {
    "doe": "doe.json",
    "episodes": "episodes.csv",
    "bases": "bases.json",
    "model": "model.json",
    "history": "train_history.json",
    "train_metrics": "train_metrics.json",
    "validation": "validation.json",
    "report_dir": "report",
}

# which command writes which artifact, for actionable "missing input" errors
PRODUCER = {
    "doe": "doe",
    "episodes": "simulate",
    "bases": "fit-reduction",
    "model": "train",
    "validation": "validate",
}


def defaults() -> dict:
    doc = {
        "version": __version__,
        "seed": 0,
        "doe": {"base_count": 20, "n_negative": 16, "n_positive": 4, "seq_len": 6, "sequences": 80},
        "plant": PlantParams().to_dict(),
        "reduction": {"r": 4, "p": 5, "center": False},
        "split": {"holdout": 5},
        "train": TrainConfig().to_dict(),
        "validation": {"replicates": 15},
        "mpc": {**MpcSpec().to_dict(), "envelope_margin": 0.1},
        "control": {"target_fraction": 0.6, "target_cycles": 2, "drift": 1.0, "adapt": True},
        "adapt": {"lambda": DEFAULT_LAMBDA, "p0": DEFAULT_P0,
                  "deviation_threshold": AdaptTriggers().deviation_threshold,
                  "stagnation_threshold": AdaptTriggers().stagnation_threshold},
        "artifacts": dict(ARTIFACTS),
    }
    # canonical JSON types (lists, not tuples) so in-memory and loaded documents compare equal
    return json.loads(json.dumps(doc))


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "content_hash":
            continue
        if key not in base:
            raise SchemaError(f"unknown manifest key {where + key!r}")
        if isinstance(base[key], dict) and base[key] and key not in ("plant",):
            if not isinstance(value, dict):
                raise SchemaError(f"manifest key {where + key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def content_hash(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "content_hash"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


class RunManifest:
    """Validated view over a manifest document."""

    def __init__(self, doc: dict | None = None):
        self.doc = _merge(defaults(), doc or {})
        # construct typed configs once so bad values fail early with a schema error
        try:
            self.plant
            self.train_config
            self.mpc_spec
            self.triggers
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"invalid manifest value: {exc}") from None
        if self.doc["split"]["holdout"] < 0 or self.doc["validation"]["replicates"] < 1:
            raise SchemaError("split.holdout must be >= 0 and validation.replicates >= 1")

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise SchemaError(f"manifest {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise SchemaError(f"manifest {path} must hold a JSON object")
        stored = doc.get("content_hash")
        if stored is not None and stored != content_hash(doc):
            raise SchemaError(f"manifest {path}: content hash does not match its contents")
        return cls(doc)

    def to_dict(self) -> dict:
        doc = copy.deepcopy(self.doc)
        doc["content_hash"] = content_hash(doc)
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @property
    def hash(self) -> str:
        return content_hash(self.doc)

    def with_seed(self, seed: int) -> "RunManifest":
        doc = copy.deepcopy(self.doc)
        doc["seed"] = int(seed)
        return RunManifest(doc)

    # -- typed views

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def plant(self) -> PlantParams:
        return PlantParams.from_dict({**self.doc["plant"], "seed": self.seed})

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.doc["train"], "seed": self.seed})

    @property
    def mpc_spec(self) -> MpcSpec:
        d = {k: v for k, v in self.doc["mpc"].items() if k != "envelope_margin"}
        return MpcSpec.from_dict(d)

    @property
    def envelope_margin(self):
        return self.doc["mpc"]["envelope_margin"]

    @property
    def triggers(self) -> AdaptTriggers:
        a = self.doc["adapt"]
        return AdaptTriggers(a["deviation_threshold"], a["stagnation_threshold"])

    def artifact(self, out_dir, name: str) -> Path:
        return Path(out_dir) / self.doc["artifacts"][name]
