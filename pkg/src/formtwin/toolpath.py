"""Parametric toolpath generator and the stratified design of experiments.

A toolpath is the commanded z-displacement of the gripper sampled on the
station grid.  Base paths follow ``z(y) = A sin(2 pi f y + phi) + T y`` with
``y`` normalized to ``[0, 1]`` over the travel span, so ``f < 1`` is less than
one period and ``T`` is the net linear rise in mm.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import STATION_SPAN_MM, default_station_grid
from .errors import SamplingError, SchemaError

AMPLITUDE_RANGE = (10.0, 30.0)
# single-lobe paths: at most half a period over the span
FREQUENCY_RANGE = (0.05, 0.5)
TREND_SCALE_MM = 10.0
MAX_ATTEMPTS = 10_000


@dataclass(frozen=True)
class ToolpathParams:
    amplitude: float
    frequency: float
    phase: float
    trend: float
    negative: bool = True

    def __post_init__(self):
        lo, hi = AMPLITUDE_RANGE
        if not lo <= self.amplitude <= hi:
            raise ValueError(f"amplitude {self.amplitude} outside [{lo}, {hi}]")
        if not 0.0 < self.frequency < 1.0:
            raise ValueError(f"frequency {self.frequency} outside (0, 1)")
        if not 0.0 <= self.phase <= 2 * np.pi:
            raise ValueError(f"phase {self.phase} outside [0, 2pi]")
        if abs(self.trend) > TREND_SCALE_MM:
            raise ValueError(f"trend {self.trend} outside [-{TREND_SCALE_MM}, {TREND_SCALE_MM}]")


def evaluate_toolpath(params: ToolpathParams, grid=None, span: float = STATION_SPAN_MM) -> np.ndarray:
    y = default_station_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(y < 0) or np.any(y > span):
        raise ValueError(f"grid must lie within [0, {span}]")
    yn = y / span
    return params.amplitude * np.sin(2 * np.pi * params.frequency * yn + params.phase) + params.trend * yn


def interior_extrema(z: np.ndarray) -> int:
    """Number of sign changes of the first difference (interior extrema on the grid)."""
    d = np.diff(z)
    d = d[d != 0]
    return int(np.sum(np.sign(d[1:]) != np.sign(d[:-1])))


def sample_base_paths(seed: int, n_negative: int = 16, n_positive: int = 4, grid=None) -> list[ToolpathParams]:
    """Draw the base path family; the first ``n_negative`` bend downward.

    The phase is drawn from the half-range that puts the sine lobe on the
    requested side, and a draw is rejected unless the mean displacement has the
    requested sign and the path has at most one interior extremum.
    """
    rng = np.random.default_rng(seed)
    grid = default_station_grid() if grid is None else grid
    out: list[ToolpathParams] = []
    attempts = 0
    for negative, count in ((True, n_negative), (False, n_positive)):
        got = 0
        while got < count:
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise SamplingError(f"gave up after {MAX_ATTEMPTS} draws")
            amp = rng.uniform(*AMPLITUDE_RANGE)
            freq = rng.uniform(*FREQUENCY_RANGE)
            phase = rng.uniform(np.pi, 2 * np.pi) if negative else rng.uniform(0.0, np.pi)
            trend = rng.uniform(-TREND_SCALE_MM, TREND_SCALE_MM)
            params = ToolpathParams(amp, freq, phase, trend, negative)
            z = evaluate_toolpath(params, grid)
            if (z.mean() < 0) != negative or interior_extrema(z) > 1:
                continue
            out.append(params)
            got += 1
    return out


@dataclass
class DoePlan:
    base_paths: list[ToolpathParams]
    sequences: list[list[int]]
    seed: int
    grid: list[float] = field(default_factory=lambda: default_station_grid().tolist())

    def toolpath_matrix(self, index: int) -> np.ndarray:
        """``n_u x N`` toolpath matrix for sequence ``index``."""
        return np.column_stack([evaluate_toolpath(self.base_paths[b], self.grid)
                                for b in self.sequences[index]])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "grid": list(self.grid),
            "base_paths": [asdict(p) for p in self.base_paths],
            "sequences": [list(map(int, s)) for s in self.sequences],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DoePlan":
        try:
            return cls([ToolpathParams(**p) for p in d["base_paths"]],
                       [list(s) for s in d["sequences"]], int(d["seed"]), list(d["grid"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed DOE plan: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DoePlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def stratified_slots(base_count: int, seq_len: int, seq_count: int, rng) -> np.ndarray:
    """Per slot, a shuffled column using every base index floor(seq_count/base_count) times.

    The remainder is filled with distinct indices, so per-slot usage counts
    differ by at most one.
    """
    reps, extra = divmod(seq_count, base_count)
    slots = np.empty((seq_count, seq_len), dtype=int)
    for k in range(seq_len):
        column = np.concatenate([np.tile(np.arange(base_count), reps),
                                 rng.permutation(base_count)[:extra]])
        slots[:, k] = rng.permutation(column)
    return slots


def lhs_sequences(base_count: int = 20, seq_len: int = 6, seq_count: int = 80, seed: int = 0,
                  base_paths: list[ToolpathParams] | None = None) -> DoePlan:
    rng = np.random.default_rng(seed)
    if base_paths is None:
        base_paths = sample_base_paths(seed)
    if len(base_paths) != base_count:
        raise ValueError(f"{len(base_paths)} base paths supplied, expected {base_count}")
    slots = stratified_slots(base_count, seq_len, seq_count, rng)
    return DoePlan(list(base_paths), slots.tolist(), seed)
