"""Snapshots, toolpaths and episodes, plus their CSV persistence.

An episode is one formed part: ``N + 1`` deformation snapshots (the flat
reference followed by one measurement per forming cycle) and the ``N``
toolpaths that produced them.

File layout (one row per record)::

    episode_id,record_kind,cycle_index,v1,v2,...
    ep000,snapshot,0,0,0,0,0,0,0,0,0
    ep000,toolpath,0,-1.5,-3.2,...

A sidecar ``<stem>.meta.json`` records ``n_x``, ``n_u``, the y-grids and
units.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SchemaError

N_X = 8
N_U = 20
STATION_SPAN_MM = 120.0
SHEET_LENGTH_MM = 240.0
FLOAT_FORMAT = "%.6g"


def default_station_grid(n_u: int = N_U) -> np.ndarray:
    """Uniform toolpath sampling stations over the gripper travel ``[0, 120]`` mm."""
    return np.linspace(0.0, STATION_SPAN_MM, n_u)


def default_tracker_grid(n_x: int = N_X) -> np.ndarray:
    """Tracker positions along the sheet midline; the last one sits on the free end."""
    return np.linspace(SHEET_LENGTH_MM / n_x, SHEET_LENGTH_MM, n_x)


@dataclass(frozen=True)
class Snapshot:
    values: np.ndarray
    cycle_index: int = 0

    def __post_init__(self):
        _check_vector(self.values, "snapshot")
        if self.cycle_index < 0:
            raise SchemaError(f"negative cycle index {self.cycle_index}")


@dataclass(frozen=True)
class Toolpath:
    values: np.ndarray
    cycle_index: int = 0

    def __post_init__(self):
        _check_vector(self.values, "toolpath")
        if self.cycle_index < 0:
            raise SchemaError(f"negative cycle index {self.cycle_index}")


def _check_vector(values, kind):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise SchemaError(f"{kind} values must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{kind} contains non-finite values")


@dataclass
class Episode:
    """One part: snapshot matrix ``X`` (n_x, N+1) and toolpath matrix ``U`` (n_u, N)."""

    episode_id: str
    X: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        if self.X.ndim != 2 or self.U.ndim != 2:
            raise SchemaError(f"episode {self.episode_id}: X and U must be matrices")
        if self.X.shape[1] != self.U.shape[1] + 1:
            raise SchemaError(
                f"episode {self.episode_id}: {self.X.shape[1]} snapshots but "
                f"{self.U.shape[1]} toolpaths (need exactly one more snapshot)"
            )
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.U))):
            raise ParseError(f"episode {self.episode_id}: non-finite values")

    @property
    def n_cycles(self) -> int:
        return self.U.shape[1]

    @property
    def snapshots(self) -> list[Snapshot]:
        return [Snapshot(self.X[:, k], k) for k in range(self.X.shape[1])]

    @property
    def toolpaths(self) -> list[Toolpath]:
        return [Toolpath(self.U[:, k], k) for k in range(self.U.shape[1])]

    @classmethod
    def from_records(cls, episode_id: str, snapshots: Sequence[Snapshot],
                     toolpaths: Sequence[Toolpath]) -> "Episode":
        X = np.column_stack([s.values for s in snapshots]) if snapshots else np.zeros((N_X, 0))
        U = np.column_stack([t.values for t in toolpaths]) if toolpaths else np.zeros((N_U, 0))
        return cls(episode_id, X, U)


@dataclass
class ShiftedPair:
    """Consecutive-snapshot matrices: ``x_next[:, j]`` follows ``x_now[:, j]`` under ``u_now[:, j]``."""

    x_now: np.ndarray
    x_next: np.ndarray
    u_now: np.ndarray
    episode_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_columns(self) -> int:
        return self.x_now.shape[1]


def to_shifted_pairs(episodes: Sequence[Episode]) -> ShiftedPair:
    if not episodes:
        raise ValueError("need at least one episode")
    x_now, x_next, u_now, owner = [], [], [], []
    for j, ep in enumerate(episodes):
        if ep.n_cycles == 0:
            raise ValueError(f"episode {ep.episode_id} has no cycles")
        x_now.append(ep.X[:, :-1])
        x_next.append(ep.X[:, 1:])
        u_now.append(ep.U)
        owner.append(np.full(ep.n_cycles, j))
    return ShiftedPair(np.hstack(x_now), np.hstack(x_next), np.hstack(u_now),
                       np.concatenate(owner))


def split_train_validation(episodes: Sequence[Episode], holdout: int, seed: int):
    """Hold out ``holdout`` whole episodes chosen by a seeded permutation.

    Both partitions keep the input order.
    """
    n = len(episodes)
    if holdout < 0 or (n and holdout >= n) or (not n and holdout):
        raise ValueError(f"holdout must be in [0, {n}), got {holdout}")
    rng = np.random.default_rng(seed)
    held = set(rng.permutation(n)[:holdout].tolist())
    train = [ep for i, ep in enumerate(episodes) if i not in held]
    val = [ep for i, ep in enumerate(episodes) if i in held]
    return train, val


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_episodes(path, episodes: Iterable[Episode], metadata: dict | None = None) -> None:
    episodes = list(episodes)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_x = episodes[0].X.shape[0] if episodes else N_X
    n_u = episodes[0].U.shape[0] if episodes else N_U
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode_id", "record_kind", "cycle_index", "values"])
        for ep in episodes:
            for k in range(ep.X.shape[1]):
                writer.writerow([ep.episode_id, "snapshot", k, *(_fmt(v) for v in ep.X[:, k])])
            for k in range(ep.U.shape[1]):
                writer.writerow([ep.episode_id, "toolpath", k, *(_fmt(v) for v in ep.U[:, k])])
    meta = {
        "n_x": int(n_x),
        "n_u": int(n_u),
        "units": "mm",
        "y_grid": default_station_grid(n_u).tolist(),
        "tracker_grid": default_tracker_grid(n_x).tolist(),
        "precision": "6 significant digits",
    }
    meta.update(metadata or {})
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    s = FLOAT_FORMAT % v
    return "0" if s == "-0" else s


def load_metadata(path) -> dict:
    side = sidecar_path(path)
    if side.exists():
        return json.loads(side.read_text())
    return {}


def load_episodes(path, n_x: int | None = None, n_u: int | None = None) -> list[Episode]:
    """Read every episode in ``path``; arities come from the sidecar when present."""
    path = Path(path)
    meta = load_metadata(path)
    n_x = n_x or int(meta.get("n_x", N_X))
    n_u = n_u or int(meta.get("n_u", N_U))
    expected = {"snapshot": n_x, "toolpath": n_u}

    records: dict[str, dict[str, list]] = {}
    order: list[str] = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0] == "episode_id"):
                continue
            if len(row) < 3:
                raise SchemaError(f"{path}:{lineno}: expected at least 3 columns, got {len(row)}")
            eid, kind, cyc = row[0], row[1], row[2]
            if kind not in expected:
                raise SchemaError(f"{path}:{lineno}: unknown record_kind {kind!r}")
            got = len(row) - 3
            if got != expected[kind]:
                raise SchemaError(
                    f"{path}:{lineno}: {kind} row has {got} values, expected {expected[kind]}")
            try:
                cycle = int(cyc)
                values = np.array([float(v) for v in row[3:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            if eid not in records:
                records[eid] = {"snapshot": [], "toolpath": []}
                order.append(eid)
            records[eid][kind].append((cycle, values))

    episodes = []
    for eid in order:
        rec = records[eid]
        snaps = sorted(rec["snapshot"], key=lambda t: t[0])
        tools = sorted(rec["toolpath"], key=lambda t: t[0])
        for kind, items in (("snapshot", snaps), ("toolpath", tools)):
            idx = [c for c, _ in items]
            if idx != list(range(len(idx))):
                raise SchemaError(f"{path}: episode {eid}: {kind} cycle indices {idx} not 0..{len(idx) - 1}")
        if len(snaps) != len(tools) + 1:
            raise SchemaError(
                f"{path}: episode {eid}: {len(snaps)} snapshots and {len(tools)} toolpaths; "
                f"expected {len(tools) + 1} snapshots")
        X = np.column_stack([v for _, v in snaps])
        U = np.column_stack([v for _, v in tools]) if tools else np.zeros((n_u, 0))
        episodes.append(Episode(eid, X, U))
    return episodes

