"""Dimension reduction of snapshots (POD) and toolpaths (Chebyshev series).

Deformation snapshots are compressed onto a handful of orthonormal spatial
modes obtained from a one-sided Jacobi SVD of the snapshot matrix.  Toolpaths
are smooth 1-D curves on a fixed y-grid and are compressed by a least-squares
fit of Chebyshev polynomials of the first kind.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import STATION_SPAN_MM, Episode, default_station_grid
from .errors import NumericalError, SchemaError


def jacobi_svd(M: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Thin SVD ``M = U diag(s) V^T`` by one-sided (Hestenes) Jacobi rotations.

    Rotations act on the columns of ``M^T``, so the cost is driven by the
    small dimension ``min(M.shape)``; the snapshot matrices here are 8 x m.

    Returns
    -------
    U : (rows, k) array
    s : (k,) array, descending
    V : (cols, k) array
    with ``k = min(M.shape)``.
    """
    M = np.asarray(M, dtype=float)
    transposed = M.shape[0] < M.shape[1]
    # orthogonalize the columns of G; G has the small dimension as column count
    G = M.T.copy() if transposed else M.copy()
    n = G.shape[1]
    W = np.eye(n)
    # columns below this squared norm are roundoff; rotating them never converges
    floor = (np.finfo(float).eps * np.linalg.norm(G)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                gi, gj = G[:, i], G[:, j]
                alpha = gi @ gi
                beta = gj @ gj
                gamma = gi @ gj
                if alpha <= floor or beta <= floor or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = c * t
                Gi = c * gi - sn * gj
                G[:, j] = sn * gi + c * gj
                G[:, i] = Gi
                Wi = c * W[:, i] - sn * W[:, j]
                W[:, j] = sn * W[:, i] + c * W[:, j]
                W[:, i] = Wi
        if not rotated:
            break
    else:
        raise NumericalError("Jacobi SVD did not converge")

    s = np.linalg.norm(G, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    G = G[:, order]
    W = W[:, order]
    small = s <= (s[0] if len(s) else 0.0) * max(G.shape) * np.finfo(float).eps
    Q = G / np.where(small, 1.0, s)
    if np.any(small):
        Q = _complete_orthonormal(Q, ~small)
    # G = Gorig W = Q diag(s): for transposed input M^T W = Q s, so M = W s Q^T
    if transposed:
        return W, s, Q
    return Q, s, W


def _complete_orthonormal(Q, keep):
    """Replace the columns of ``Q`` not flagged in ``keep`` by an orthonormal complement."""
    Q = Q.copy()
    basis = [Q[:, i] for i in np.flatnonzero(keep)]
    candidates = iter(np.eye(Q.shape[0]))
    for i in np.flatnonzero(~keep):
        for e in candidates:
            v = e - sum((b @ e) * b for b in basis) if basis else e.copy()
            v = v - sum((b @ v) * b for b in basis) if basis else v
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                Q[:, i] = v / nv
                basis.append(Q[:, i])
                break
    return Q


# --------------------------------------------------------------------- POD

@dataclass(frozen=True)
class PodBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    mean: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    @property
    def n_x(self) -> int:
        return self.modes.shape[0]


def fit_pod(snapshot_matrix: np.ndarray, r: int, center: bool = False) -> PodBasis:
    """Leading ``r`` POD modes of an ``n_x x m`` snapshot matrix."""
    X = np.asarray(snapshot_matrix, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError("snapshot matrix must be a finite 2-D array")
    if r < 1 or r > min(X.shape):
        raise ValueError(f"mode count r={r} outside [1, {min(X.shape)}]")
    mean = X.mean(axis=1) if center else None
    Xc = X - mean[:, None] if center else X
    U, s, _ = jacobi_svd(Xc)
    modes = U[:, :r].copy()
    # sign convention: largest-magnitude entry of each mode is positive
    for i in range(r):
        if modes[np.argmax(np.abs(modes[:, i])), i] < 0:
            modes[:, i] = -modes[:, i]
    return PodBasis(modes, s, mean)


def energy_fraction(basis: PodBasis, r: int) -> float:
    s2 = basis.singular_values ** 2
    if r > len(s2):
        raise ValueError(f"r={r} exceeds the {len(s2)} available singular values")
    total = s2.sum()
    if total == 0.0:
        return 1.0
    return float(s2[:r].sum() / total)


def project_pod(basis: PodBasis, x: np.ndarray) -> np.ndarray:
    """Reduced coordinates ``Phi^T (x - mean)``; accepts a vector or column matrix."""
    x = np.asarray(x, dtype=float)
    if basis.mean is not None:
        x = x - (basis.mean if x.ndim == 1 else basis.mean[:, None])
    return basis.modes.T @ x


def reconstruct_pod(basis: PodBasis, x_tilde: np.ndarray) -> np.ndarray:
    x_tilde = np.asarray(x_tilde, dtype=float)
    out = basis.modes @ x_tilde
    if basis.mean is not None:
        out = out + (basis.mean if out.ndim == 1 else basis.mean[:, None])
    return out


# --------------------------------------------------------------- Chebyshev

def chebyshev_value(i: int, x):
    """``T_i(x)`` by the three-term recurrence."""
    if i < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    t_prev, t = np.ones_like(x), x
    if i == 0:
        return t_prev if t_prev.ndim else float(t_prev)
    for _ in range(i - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t if t.ndim else float(t)


def map_to_unit(y, span: float = STATION_SPAN_MM) -> np.ndarray:
    """Affine map ``[0, span] -> [-1, 1]``."""
    return 2.0 * np.asarray(y, dtype=float) / span - 1.0


@dataclass(frozen=True)
class ChebyshevBasis:
    design_matrix: np.ndarray
    y_grid: np.ndarray

    @property
    def degree_count(self) -> int:
        return self.design_matrix.shape[1]

    @property
    def n_u(self) -> int:
        return self.design_matrix.shape[0]

    @property
    def start_vector(self) -> np.ndarray:
        """Basis values at y = 0 (mapped x = -1): ``(-1)^i``."""
        return np.array([(-1.0) ** i for i in range(self.degree_count)])

    @property
    def end_vector(self) -> np.ndarray:
        """Basis values at y = span (mapped x = 1): all ones."""
        return np.ones(self.degree_count)


def chebyshev_basis(p: int = 5, y_grid: np.ndarray | None = None,
                    span: float = STATION_SPAN_MM) -> ChebyshevBasis:
    y = default_station_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    if p < 1 or p > len(y):
        raise ValueError(f"degree count p={p} must be in [1, {len(y)}]")
    x = map_to_unit(y, span)
    T = np.column_stack([chebyshev_value(i, x) for i in range(p)])
    return ChebyshevBasis(T, y)


def fit_chebyshev(basis: ChebyshevBasis, u: np.ndarray) -> np.ndarray:
    """Least-squares coefficients; ``u`` may be a vector or an ``n_u x k`` matrix."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != basis.n_u:
        raise ValueError(f"toolpath length {u.shape[0]} != grid size {basis.n_u}")
    coef, _, rank, _ = np.linalg.lstsq(basis.design_matrix, u, rcond=None)
    if rank < basis.degree_count:
        raise NumericalError("Chebyshev design matrix is rank deficient")
    return coef


def reconstruct_chebyshev(basis: ChebyshevBasis, u_tilde: np.ndarray) -> np.ndarray:
    return basis.design_matrix @ np.asarray(u_tilde, dtype=float)


# ----------------------------------------------------------------- bundles

@dataclass(frozen=True)
class ReductionBases:
    pod: PodBasis
    cheb: ChebyshevBasis

    @property
    def r(self) -> int:
        return self.pod.rank

    @property
    def p(self) -> int:
        return self.cheb.degree_count

    def to_dict(self) -> dict:
        return {
            "n_x": self.pod.n_x,
            "r": self.r,
            "modes": self.pod.modes.ravel().tolist(),
            "singular_values": self.pod.singular_values.tolist(),
            "mean": None if self.pod.mean is None else self.pod.mean.tolist(),
            "y_grid": self.cheb.y_grid.tolist(),
            "degree_count": self.p,
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionBases":
        try:
            modes = np.asarray(d["modes"], dtype=float).reshape(d["n_x"], d["r"])
            pod = PodBasis(modes, np.asarray(d["singular_values"], dtype=float),
                           None if d.get("mean") is None else np.asarray(d["mean"], dtype=float))
            cheb = chebyshev_basis(int(d["degree_count"]), np.asarray(d["y_grid"], dtype=float))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"malformed bases document: {exc}") from None
        return cls(pod, cheb)

    def save(self, path) -> None:
        d = self.to_dict()
        d["fingerprint"] = self.fingerprint
        Path(path).write_text(json.dumps(d, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ReductionBases":
        d = json.loads(Path(path).read_text())
        bases = cls.from_dict(d)
        if "fingerprint" in d and d["fingerprint"] != bases.fingerprint:
            raise SchemaError(f"{path}: fingerprint does not match contents")
        return bases


def fit_reduction(episodes, r: int = 4, p: int = 5, center: bool = False) -> ReductionBases:
    """POD on every snapshot of every episode plus a Chebyshev basis on the station grid."""
    X = np.hstack([ep.X for ep in episodes])
    n_u = episodes[0].U.shape[0]
    return ReductionBases(fit_pod(X, r, center), chebyshev_basis(p, default_station_grid(n_u)))


@dataclass
class ReducedEpisode:
    episode_id: str
    x_tilde: np.ndarray   # (r, N+1)
    u_tilde: np.ndarray   # (p, N)

    @property
    def n_cycles(self) -> int:
        return self.u_tilde.shape[1]


def reduce_episode(bases: ReductionBases, ep: Episode) -> ReducedEpisode:
    return ReducedEpisode(ep.episode_id, project_pod(bases.pod, ep.X),
                          fit_chebyshev(bases.cheb, ep.U) if ep.n_cycles else np.zeros((bases.p, 0)))
