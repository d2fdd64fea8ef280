"""Recursive least-squares refresh of the Koopman input matrix ``B``.

``A`` and the encoder/decoder stay fixed; only the input-to-lifted-state map
is re-identified from the per-cycle residual ``e = z_next - A z``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_LAMBDA = 0.9
DEFAULT_P0 = 1e-3


@dataclass
class RlsState:
    P: np.ndarray
    lam: float = DEFAULT_LAMBDA
    update_count: int = 0

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise ValueError(f"P must be square, got {self.P.shape}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"forgetting factor {self.lam} outside (0, 1]")

    @classmethod
    def initial(cls, p: int, lam: float = DEFAULT_LAMBDA, p0: float = DEFAULT_P0) -> "RlsState":
        return cls(p0 * np.eye(p), lam, 0)


@dataclass(frozen=True)
class AdaptTriggers:
    deviation_threshold: float = 3.0    # mm
    stagnation_threshold: float = 3.0   # mm

    def __post_init__(self):
        if self.deviation_threshold <= 0 or self.stagnation_threshold <= 0:
            raise ValueError("trigger thresholds must be positive")


def residual(model, z_now, z_next_measured) -> np.ndarray:
    A = model.A if hasattr(model, "A") else np.asarray(model)
    z_now = np.asarray(z_now, dtype=float)
    z_next_measured = np.asarray(z_next_measured, dtype=float)
    if z_now.shape != (A.shape[1],) or z_next_measured.shape != (A.shape[0],):
        raise ValueError("lifted state dimensions do not match A")
    return z_next_measured - A @ z_now


def rls_update(state: RlsState, B, e, u_tilde):
    """One forgetting-factor RLS step.  Returns ``(new_state, new_B)``; inputs are not mutated."""
    B = np.asarray(B, dtype=float)
    e = np.asarray(e, dtype=float)
    u = np.asarray(u_tilde, dtype=float)
    if B.shape != (e.shape[0], u.shape[0]) or state.P.shape != (u.shape[0], u.shape[0]):
        raise ValueError(f"shape mismatch: B {B.shape}, e {e.shape}, u {u.shape}, P {state.P.shape}")
    Pu = state.P @ u
    den = state.lam + u @ Pu
    K = Pu / den
    P = (state.P - np.outer(Pu, Pu) / den) / state.lam
    P = 0.5 * (P + P.T)
    B_new = B + np.outer(e - B @ u, K)
    return RlsState(P, state.lam, state.update_count + 1), B_new


def weighted_batch_solution(B0, P0, E, U, lam: float) -> np.ndarray:
    """Closed-form minimizer of the exponentially weighted cost with a ``(B0, P0)`` prior.

    ``E`` is (t, d_z), ``U`` is (t, p); sample i carries weight ``lam**(t-1-i)``
    and the prior weight ``lam**t``.
    """
    E = np.atleast_2d(E)
    U = np.atleast_2d(U)
    t = len(U)
    w = lam ** np.arange(t - 1, -1, -1, dtype=float)
    P0inv = np.linalg.inv(P0)
    G = lam ** t * P0inv + (U * w[:, None]).T @ U
    H = lam ** t * B0 @ P0inv + (E * w[:, None]).T @ U
    return np.linalg.solve(G.T, H.T).T


def should_update(measured, predicted, previous, triggers: AdaptTriggers = AdaptTriggers()):
    """Return ``(fire, reason)``; the deviation test takes precedence over stagnation."""
    measured = np.asarray(measured, dtype=float)
    if predicted is not None:
        dev = float(np.max(np.abs(measured - np.asarray(predicted, dtype=float))))
        if dev > triggers.deviation_threshold:
            return True, "deviation"
    if previous is not None:
        change = float(np.max(np.abs(measured - np.asarray(previous, dtype=float))))
        if change < triggers.stagnation_threshold:
            return True, "stagnation"
    return False, ""


def b_increment_report(B_before, B_after, k: int = 5) -> dict:
    """Elementwise change of ``B`` and its ``k`` largest-magnitude entries as (row, col, value)."""
    B_before = np.asarray(B_before, dtype=float)
    B_after = np.asarray(B_after, dtype=float)
    if B_before.shape != B_after.shape:
        raise ValueError(f"shapes differ: {B_before.shape} vs {B_after.shape}")
    delta = B_after - B_before
    flat = np.argsort(-np.abs(delta), axis=None, kind="stable")[:k]
    top = [[int(i), int(j), float(delta[i, j])] for i, j in zip(*np.unravel_index(flat, delta.shape))]
    return {"delta": delta.tolist(), "top": top}
