"""Receding-horizon control in the lifted Koopman space.

Each cycle: measure the strip, project and lift the measurement, solve the
horizon QP, apply the reconstruction of the first optimized input, repeat.
Optionally the input matrix ``B`` is refreshed online between cycles
(:mod:`formtwin.adapt`).
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adapt as adapt_mod
from .errors import NumericalError
from .qp import SOLVED, QpSettings, QpSolver, condense
from .reduction import ReductionBases, fit_chebyshev, project_pod, reconstruct_chebyshev, reconstruct_pod

log = logging.getLogger(__name__)

G2_EPS = 1e-6


@dataclass
class MpcSpec:
    horizon: int = 6
    state_weights: tuple = (20.0, 10.0, 10.0, 1.0)   # on the appended reduced states
    observable_weight: float = 1.0
    terminal_factor: float = 0.1
    input_weight: float = 1e-5
    u_bound: float = 40.0
    u_min: tuple | None = None      # per-coefficient bounds; default -u_bound / +u_bound
    u_max: tuple | None = None
    termination_tol: float = 1.5
    max_cycles: int = 6
    eps: float = G2_EPS

    def Q(self, d_z: int, r: int) -> np.ndarray:
        w = np.asarray(self.state_weights, dtype=float)
        if len(w) != r:
            w = np.resize(w, r)
        return np.concatenate([np.full(d_z - r, self.observable_weight), w])

    def QN(self, d_z: int, r: int) -> np.ndarray:
        return self.terminal_factor * self.Q(d_z, r)

    def bounds(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(p, -self.u_bound) if self.u_min is None else np.asarray(self.u_min, dtype=float)
        hi = np.full(p, self.u_bound) if self.u_max is None else np.asarray(self.u_max, dtype=float)
        if lo.shape != (p,) or hi.shape != (p,) or np.any(lo > hi):
            raise ValueError(f"input bounds must be ordered length-{p} vectors")
        return lo, hi

    def R(self, p: int) -> np.ndarray:
        return np.full(p, self.input_weight)

    @staticmethod
    def c1(p: int) -> np.ndarray:
        """Chebyshev basis values at the path start (mapped x = -1)."""
        return np.array([(-1.0) ** i for i in range(p)])

    @staticmethod
    def c2(p: int) -> np.ndarray:
        """Chebyshev basis values at the path end (mapped x = 1)."""
        return np.ones(p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MpcSpec":
        d = dict(d)
        for k in ("state_weights", "u_min", "u_max"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class MpcProblem:
    """Data of one horizon problem; ``Q, QN, R`` are diagonals."""

    A: np.ndarray
    B: np.ndarray
    z0: np.ndarray
    zr: np.ndarray
    Q: np.ndarray
    QN: np.ndarray
    R: np.ndarray
    N: int
    u_min: np.ndarray
    u_max: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    eps: float

    @property
    def d_z(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def n_variables(self) -> int:
        return self.N * (self.d_z + self.p)

    def cost(self, Z, U) -> float:
        """Objective for lifted states ``Z`` (N, d_z) after ``z0`` and inputs ``U`` (N, p)."""
        Zall = np.vstack([self.z0, Z])
        dev = Zall - self.zr
        stage = sum(dev[k] @ (self.Q * dev[k]) + U[k] @ (self.R * U[k]) for k in range(self.N))
        return float(stage + dev[self.N] @ (self.QN * dev[self.N]))


def build_problem(model, spec: MpcSpec, z0, zr, A=None, B=None) -> MpcProblem:
    A = model.A if A is None else A
    B = model.B if B is None else B
    d_z, p = B.shape
    z0 = np.asarray(z0, dtype=float)
    zr = np.asarray(zr, dtype=float)
    if z0.shape != (d_z,) or zr.shape != (d_z,):
        raise ValueError(f"z0 {z0.shape} / zr {zr.shape} must have length d_z={d_z}")
    r = getattr(model, "r", len(spec.state_weights))
    lo, hi = spec.bounds(p)
    return MpcProblem(A, B, z0, zr, spec.Q(d_z, r), spec.QN(d_z, r), spec.R(p), spec.horizon,
                      lo, hi, spec.c1(p), spec.c2(p), spec.eps)


def lift_target(model, target, bases: ReductionBases) -> np.ndarray:
    return model.lift(project_pod(bases.pod, np.asarray(target, dtype=float)))


def split_solution(problem: MpcProblem, x):
    nz = problem.N * problem.d_z
    return x[:nz].reshape(problem.N, problem.d_z), x[nz:].reshape(problem.N, problem.p)


def enforce_endpoints(u_tilde, c1, c2, eps) -> np.ndarray:
    """Smallest change making ``c1'u = 0`` exact and ``c2'u <= -eps``.

    ADMM meets the constraints only to solver tolerance; the applied
    coefficient vector must meet them to machine precision.
    """
    u = np.asarray(u_tilde, dtype=float).copy()
    u -= c1 * (c1 @ u) / (c1 @ c1)
    excess = c2 @ u + eps * 1.001
    if excess > 0:
        # move along the part of c2 orthogonal to c1 so the start stays fixed
        d = c2 - c1 * (c1 @ c2) / (c1 @ c1)
        u -= d * excess / (d @ c2)
        u -= c1 * (c1 @ u) / (c1 @ c1)
    return u


def envelope_bounds(reduced_episodes, margin: float = 0.1) -> tuple[tuple, tuple]:
    """Per-coefficient range of the training inputs widened by ``margin`` of its width.

    Keeps the optimizer inside the region where the linear input map was identified.
    """
    U = np.hstack([r.u_tilde for r in reduced_episodes])
    if U.size == 0:
        raise ValueError("no training inputs to derive an envelope from")
    lo, hi = U.min(axis=1), U.max(axis=1)
    w = hi - lo
    return tuple((lo - margin * w).tolist()), tuple((hi + margin * w).tolist())


def free_rollout(problem: MpcProblem) -> np.ndarray:
    """Decision vector of the unforced trajectory (all inputs zero); dynamically feasible."""
    Z = np.empty((problem.N, problem.d_z))
    z = problem.z0
    for k in range(problem.N):
        z = problem.A @ z
        Z[k] = z
    return np.concatenate([Z.ravel(), np.zeros(problem.N * problem.p)])


class MpcController:
    """Owns one QP solver and reuses its factorization while ``A``/``B`` are unchanged."""

    def __init__(self, model, spec: MpcSpec, settings: QpSettings | None = None):
        self.model = model
        self.spec = spec
        self.settings = settings or QpSettings()
        self._solver = None
        self._key = None
        self._last = None

    def solve(self, z0, zr):
        prob = build_problem(self.model, self.spec, z0, zr)
        qp = condense(prob)
        key = hash((self.model.A.tobytes(), self.model.B.tobytes()))
        if self._solver is None or key != self._key:
            settings = self.settings
            if self._solver is not None:
                # keep the step size the previous solver settled on
                settings = replace(settings, rho=self._solver.rho)
            self._solver = QpSolver(qp, settings)
            self._key = key
        else:
            self._solver.update(q=qp.q, l=qp.l, u=qp.u)
        if self._last is None:
            self._last = free_rollout(prob)
        self._solver.warm_start(self._last)
        sol = self._solver.solve()
        Z, U = split_solution(prob, sol.x)
        # shift the plan by one stage for the next warm start
        self._last = np.concatenate([np.vstack([Z[1:], Z[-1:]]).ravel(),
                                     np.vstack([U[1:], U[-1:]]).ravel()])
        return prob, sol, Z, U


@dataclass
class CycleRecord:
    cycle: int
    measured: list
    reduced: list
    lifted_head: list
    u_tilde_plan: list
    applied_toolpath: list
    predicted_next: list
    deviation: float
    qp_status: str
    qp_iterations: int
    qp_time: float
    qp_primal_residual: float
    qp_dual_residual: float
    b_updated: bool = False
    update_reason: str = ""
    b_increment_top: list = field(default_factory=list)


@dataclass
class ControlTrace:
    target: list
    records: list = field(default_factory=list)
    final_measured: list = field(default_factory=list)
    final_deviation: float = np.nan
    terminated: str = ""
    adapt: bool = False
    b_increments: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def applied_count(self) -> int:
        return len(self.records)

    def to_jsonl(self, path) -> None:
        lines = [json.dumps({"kind": "header", "target": self.target, "adapt": self.adapt,
                             "meta": self.meta})]
        lines += [json.dumps({"kind": "cycle", **asdict(r)}) for r in self.records]
        lines.append(json.dumps({"kind": "summary", "final_measured": self.final_measured,
                                 "final_deviation": self.final_deviation,
                                 "terminated": self.terminated,
                                 "applied_cycles": self.applied_count,
                                 "b_increments": self.b_increments}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "ControlTrace":
        trace = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "header":
                trace = cls(rec["target"], adapt=rec.get("adapt", False), meta=rec.get("meta", {}))
            elif kind == "cycle":
                trace.records.append(CycleRecord(**rec))
            elif kind == "summary":
                trace.final_measured = rec["final_measured"]
                trace.final_deviation = rec["final_deviation"]
                trace.terminated = rec["terminated"]
                trace.b_increments = rec.get("b_increments", [])
        if trace is None:
            raise ValueError(f"{path}: no header record")
        return trace


def run_closed_loop(plant, model, spec: MpcSpec, target, bases: ReductionBases, *, adapt: bool = False,
                    rls_lambda: float = adapt_mod.DEFAULT_LAMBDA, triggers=None,
                    settings: QpSettings | None = None) -> ControlTrace:
    """Drive ``plant`` (anything with ``measure()`` and ``apply(u)``) toward ``target``.

    ``model`` is copied; online updates never leak into the caller's model.
    """
    model = model.copy()
    triggers = triggers or adapt_mod.AdaptTriggers()
    target = np.asarray(target, dtype=float)
    zr = lift_target(model, target, bases)
    ctrl = MpcController(model, spec, settings)
    rls = adapt_mod.RlsState.initial(model.p, rls_lambda)
    trace = ControlTrace(target.tolist(), adapt=adapt)

    x = plant.measure()
    prev_x = None
    prev_pred = None
    prev_z = prev_u = None
    for cycle in range(spec.max_cycles + 1):
        dev = float(np.max(np.abs(target - x)))
        if cycle > 0 and adapt:
            fire, reason = adapt_mod.should_update(x, prev_pred, prev_x, triggers)
            if fire:
                z_meas = model.lift(project_pod(bases.pod, x))
                e = adapt_mod.residual(model, prev_z, z_meas)
                B_before = model.B.copy()
                rls, model.B = adapt_mod.rls_update(rls, model.B, e, prev_u)
                report = adapt_mod.b_increment_report(B_before, model.B, k=5)
                trace.records[-1].b_updated = True
                trace.records[-1].update_reason = reason
                trace.records[-1].b_increment_top = report["top"]
                trace.b_increments.append(report["delta"])
        if dev < spec.termination_tol:
            trace.terminated = "tolerance"
            break
        if cycle == spec.max_cycles:
            trace.terminated = "max_cycles"
            break

        x_red = project_pod(bases.pod, x)
        z0 = model.lift(x_red)
        prob, sol, Z, U = ctrl.solve(z0, zr)
        if sol.status != SOLVED:
            trace.terminated = f"qp_{sol.status}"
            log.error("QP failed at cycle %d: %s", cycle, sol.status)
            raise NumericalError(f"MPC QP failed at cycle {cycle}: {sol.status}")
        u0 = enforce_endpoints(U[0], prob.c1, prob.c2, prob.eps)
        path = reconstruct_chebyshev(bases.cheb, u0)
        pred = reconstruct_pod(bases.pod, model.predict_one_step(x_red, u0))
        trace.records.append(CycleRecord(
            cycle=cycle, measured=x.tolist(), reduced=x_red.tolist(), lifted_head=z0[-model.r:].tolist(),
            u_tilde_plan=U.tolist(), applied_toolpath=path.tolist(), predicted_next=pred.tolist(),
            deviation=dev, qp_status=sol.status, qp_iterations=sol.iterations, qp_time=sol.solve_time,
            qp_primal_residual=sol.primal_residual, qp_dual_residual=sol.dual_residual))
        prev_x, prev_pred, prev_z, prev_u = x, pred, z0, u0
        x = plant.apply(path)

    trace.final_measured = x.tolist()
    trace.final_deviation = float(np.max(np.abs(target - x)))
    return trace


def fitted_start_end(bases: ReductionBases, path) -> tuple[float, float]:
    """Chebyshev-fitted toolpath value at y = 0 and at the end of the span."""
    c = fit_chebyshev(bases.cheb, path)
    return float(bases.cheb.start_vector @ c), float(bases.cheb.end_vector @ c)


def time_resolve(model, spec: MpcSpec, z0, zr, settings: QpSettings | None = None, repeats: int = 3):
    """Wall time of repeated cold solves, condensing included; returns (slowest seconds, last solution)."""
    times, sol = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        qp = condense(build_problem(model, spec, z0, zr))
        sol = QpSolver(qp, settings).solve()
        times.append(time.perf_counter() - t0)
    return max(times), sol
