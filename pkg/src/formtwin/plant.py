"""Synthetic elastoplastic strip-forming plant.

Stands in for the robot + sheet.  Each cycle converts the commanded toolpath
into a local curvature demand at every station.  Only the part of the demand
above the (hardening-dependent) yield threshold becomes permanent curvature;
the remainder springs back.  The midline deflection is the double integral
of plastic curvature from the clamped end, read out at the tracker positions.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Episode, default_station_grid, default_tracker_grid


@dataclass(frozen=True)
class PlantParams:
    yield_threshold: float = 0.0008      # 1/mm
    hardening: float = 0.8
    plastic_gain: float = 0.35
    demand_gain: float = 0.00012         # 1/mm per mm of toolpath
    station_grid: tuple = field(default_factory=lambda: tuple(default_station_grid()))
    tracker_grid: tuple = field(default_factory=lambda: tuple(default_tracker_grid()))
    noise_sigma: float = 0.1             # mm
    seed: int = 0
    yield_drift: float = 1.0             # multiplies yield_threshold, unknown to the model
    replication_bias: float = 0.0        # max |bias| at the free end, mm; 0 disables

    def __post_init__(self):
        if self.yield_threshold <= 0:
            raise ValueError("yield threshold must be positive")
        if not 0 < self.plastic_gain <= 1:
            raise ValueError("plastic gain must be in (0, 1]")
        if self.hardening < 0 or self.noise_sigma < 0 or self.yield_drift <= 0:
            raise ValueError("hardening, noise_sigma must be >= 0 and yield_drift > 0")
        for name in ("station_grid", "tracker_grid"):
            g = np.asarray(getattr(self, name))
            if g.ndim != 1 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be strictly increasing")

    @property
    def effective_yield(self) -> float:
        return self.yield_threshold * self.yield_drift

    def to_dict(self) -> dict:
        d = asdict(self)
        d["station_grid"] = list(self.station_grid)
        d["tracker_grid"] = list(self.tracker_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        d = dict(d)
        for name in ("station_grid", "tracker_grid"):
            if name in d:
                d[name] = tuple(float(v) for v in d[name])
        return cls(**d)

    def with_(self, **changes) -> "PlantParams":
        return replace(self, **changes)


@dataclass
class PlantState:
    curvature: np.ndarray
    hardening: np.ndarray

    @classmethod
    def fresh(cls, n_stations: int) -> "PlantState":
        return cls(np.zeros(n_stations), np.zeros(n_stations))

    def copy(self) -> "PlantState":
        return PlantState(self.curvature.copy(), self.hardening.copy())


def deflection(curvature: np.ndarray, station_grid, tracker_grid) -> np.ndarray:
    """Clamped-end deflection ``w`` (w(0) = w'(0) = 0) at the tracker positions.

    Curvature is zero beyond the last station, so the sheet continues as a
    straight line out to the free end.
    """
    y = np.asarray(station_grid, dtype=float)
    yt = np.asarray(tracker_grid, dtype=float)
    h = np.diff(y)
    slope = np.concatenate([[0.0], np.cumsum(0.5 * h * (curvature[1:] + curvature[:-1]))])
    w = np.concatenate([[0.0], np.cumsum(0.5 * h * (slope[1:] + slope[:-1]))])
    # stations start at the clamp (y=0); extend linearly past the last station
    inside = np.interp(yt, y, w)
    beyond = w[-1] + slope[-1] * (yt - y[-1])
    return np.where(yt <= y[-1], inside, beyond)


def apply_cycle(state: PlantState, u: np.ndarray, params: PlantParams, rng=None):
    """One forming cycle.  Returns ``(new_state, snapshot_values)``.

    The state is not mutated.  ``rng`` supplies measurement noise when
    ``params.noise_sigma > 0``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (len(params.station_grid),):
        raise ValueError(f"toolpath has {u.shape} samples, plant expects {len(params.station_grid)}")
    ky = params.effective_yield
    demand = params.demand_gain * u
    threshold = ky * (1.0 + params.hardening * state.hardening)
    increment = np.sign(demand) * np.maximum(np.abs(demand) - threshold, 0.0) * params.plastic_gain
    # hardening is accumulated plastic curvature in units of the yield curvature
    new = PlantState(state.curvature + increment, state.hardening + np.abs(increment) / ky)
    return new, measure(new, params, rng)


def measure(state: PlantState, params: PlantParams, rng=None, bias: float = 0.0) -> np.ndarray:
    w = deflection(state.curvature, params.station_grid, params.tracker_grid)
    if bias:
        w = w + bias * np.asarray(params.tracker_grid) / params.tracker_grid[-1]
    if params.noise_sigma > 0 and rng is not None:
        w = w + rng.normal(0.0, params.noise_sigma, size=w.shape)
    return w


class Plant:
    """Stateful wrapper used by the closed loop: one owner, one noise stream."""

    def __init__(self, params: PlantParams):
        self.params = params
        self.rng = np.random.default_rng(params.seed)
        self.state = PlantState.fresh(len(params.station_grid))
        self.bias = (self.rng.uniform(-1.0, 1.0) * params.replication_bias
                     if params.replication_bias else 0.0)
        self.history: list[np.ndarray] = [np.zeros(len(params.tracker_grid))]

    def measure(self) -> np.ndarray:
        return self.history[-1].copy()

    def apply(self, u) -> np.ndarray:
        self.state, _ = apply_cycle(self.state, u, self.params)
        snap = measure(self.state, self.params, self.rng, self.bias)
        self.history.append(snap)
        return snap.copy()


def run_episode(sequence: Sequence[np.ndarray], params: PlantParams, episode_id: str = "ep") -> Episode:
    if len(sequence) == 0:
        raise ValueError("empty toolpath sequence")
    plant = Plant(params)
    for u in sequence:
        plant.apply(u)
    return Episode(episode_id, np.column_stack(plant.history), np.column_stack(list(sequence)))


def reference_toolpath(params: PlantParams, amplitude: float = 30.0) -> np.ndarray:
    """Downward quarter-sine: zero at the clamp, ``-amplitude`` at the end of the span."""
    y = np.asarray(params.station_grid, dtype=float)
    return -amplitude * np.sin(0.5 * np.pi * y / y[-1])


def noise_free_response(params: PlantParams, sequence) -> np.ndarray:
    state = PlantState.fresh(len(params.station_grid))
    for u in sequence:
        state, _ = apply_cycle(state, u, params)
    return deflection(state.curvature, params.station_grid, params.tracker_grid)


def saturation_tip(params: PlantParams, cycles: int = 40) -> float:
    """Free-end deflection once repeated reference cycles stop adding curvature."""
    u = reference_toolpath(params)
    return float(noise_free_response(params, [u] * cycles)[-1])


def moderate_target(params: PlantParams, fraction: float = 0.6, cycles: int = 2) -> np.ndarray:
    """Reachable target shape: ``cycles`` passes of a scaled reference path whose
    free-end deflection is ``fraction`` of the saturation value.  Noise-free."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    goal = fraction * saturation_tip(params)
    lo, hi = 0.0, 40.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        tip = noise_free_response(params, [reference_toolpath(params, mid)] * cycles)[-1]
        lo, hi = (mid, hi) if tip > goal else (lo, mid)
    return noise_free_response(params, [reference_toolpath(params, 0.5 * (lo + hi))] * cycles)


EPISODE_SEED_OFFSET = 1000


def simulate_plan(plan, params: PlantParams) -> list[Episode]:
    """One episode per DOE sequence; episode ``i`` draws noise from seed ``params.seed + 1000 + i``."""
    if len(plan.grid) != len(params.station_grid) or not np.allclose(plan.grid, params.station_grid):
        raise ValueError("DOE grid does not match the plant station grid")
    return [run_episode(list(plan.toolpath_matrix(i).T),
                        params.with_(seed=params.seed + EPISODE_SEED_OFFSET + i), f"ep{i:03d}")
            for i in range(len(plan.sequences))]
