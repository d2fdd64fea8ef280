"""Sparse convex QP solver based on ADMM operator splitting.

Solves::

    minimize    0.5 x'Px + q'x
    subject to  l <= Cx <= u

Equality rows are written with ``l == u``.  The iteration follows the
OSQP scheme: Ruiz equilibration, one quasi-definite KKT factorization per
rho value, over-relaxation, adaptive rho, and infeasibility certificates
from successive iterate differences.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import QpError

INF = 1e20
RHO_MIN, RHO_MAX = 1e-6, 1e6
RHO_EQ_FACTOR = 1e3

SOLVED = "solved"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"


@dataclass
class QpProblem:
    P: sp.csc_matrix
    q: np.ndarray
    C: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P, dtype=float)
        self.C = sp.csc_matrix(self.C, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.l = np.maximum(np.asarray(self.l, dtype=float), -INF)
        self.u = np.minimum(np.asarray(self.u, dtype=float), INF)
        n, m = self.n, self.m
        if self.P.shape != (n, n) or self.C.shape[1] != n or self.l.shape != (m,) or self.u.shape != (m,):
            raise QpError(f"inconsistent QP dimensions: P {self.P.shape}, q {self.q.shape}, "
                          f"C {self.C.shape}, l {self.l.shape}, u {self.u.shape}")
        asym = abs(self.P - self.P.T)
        if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(self.P).max()):
            raise QpError("P is not symmetric")
        if np.any(self.l > self.u):
            raise QpError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass
class QpSettings:
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    eps_prim_inf: float = 1e-7
    eps_dual_inf: float = 1e-7
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    max_iter: int = 20000
    adaptive_rho_interval: int = 50
    check_interval: int = 10
    scaling_iter: int = 10
    polish: bool = False
    polish_delta: float = 1e-7
    polish_refine_iter: int = 5
    polish_rounds: int = 4
    linear_solver: str = "auto"     # "kkt", "banded" or "auto"


@dataclass
class QpSolution:
    x: np.ndarray
    dual: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    objective: float = np.nan
    polished: bool = False
    rho_updates: int = 0
    info: dict = field(default_factory=dict)


def kkt_residuals(problem: QpProblem, x, y):
    """Unscaled ``(primal, dual)`` residuals, independent of solver bookkeeping."""
    Cx = problem.C @ x
    prim = Cx - np.clip(Cx, problem.l, problem.u)
    dual = problem.P @ x + problem.q + problem.C.T @ y
    return (float(np.max(np.abs(prim))) if prim.size else 0.0,
            float(np.max(np.abs(dual))) if dual.size else 0.0)


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _check_psd(P: sp.csc_matrix) -> None:
    n = P.shape[0]
    if n == 0 or P.nnz == 0:
        return
    offdiag = P - sp.diags(P.diagonal())
    if offdiag.nnz == 0 or abs(offdiag).max() == 0:
        lam_min = P.diagonal().min()
    elif n <= 2500:
        lam_min = np.linalg.eigvalsh(P.toarray()).min()
    else:
        return
    if lam_min < -1e-9 * max(1.0, abs(P).max()):
        raise QpError(f"P is not positive semidefinite (min eigenvalue {lam_min:.3g})")


def _col_inf(M: sp.csc_matrix) -> np.ndarray:
    out = np.zeros(M.shape[1])
    starts = M.indptr[:-1]
    nonempty = np.diff(M.indptr) > 0
    if M.nnz:
        out[nonempty] = np.maximum.reduceat(np.abs(M.data), starts[nonempty])
    return out


def _row_inf(M: sp.csc_matrix) -> np.ndarray:
    out = np.zeros(M.shape[0])
    np.maximum.at(out, M.indices, np.abs(M.data))
    return out


def _equilibrate(v: np.ndarray) -> np.ndarray:
    return 1.0 / np.sqrt(np.clip(np.where(v < 1e-4, 1.0, v), 1e-4, 1e4))


class _Scaling:
    """Modified Ruiz equilibration of the KKT matrix plus a cost scale.

    Works on the CSC data arrays in place: each entry is multiplied by its
    row and column factors, which avoids forming diagonal matrix products.
    """

    def __init__(self, problem: QpProblem, iters: int):
        n, m = problem.n, problem.m
        D, E, c = np.ones(n), np.ones(m), 1.0
        P, q, C = sp.csc_matrix(problem.P, copy=True), problem.q.copy(), sp.csc_matrix(problem.C, copy=True)
        P.sort_indices()
        C.sort_indices()
        P_cols = np.repeat(np.arange(n), np.diff(P.indptr))
        C_cols = np.repeat(np.arange(n), np.diff(C.indptr))
        for _ in range(iters):
            d = _equilibrate(np.maximum(_col_inf(P), _col_inf(C)))
            e = _equilibrate(_row_inf(C)) if m else np.ones(0)
            P.data *= d[P.indices] * d[P_cols]
            C.data *= e[C.indices] * d[C_cols]
            q = d * q
            D, E = D * d, E * e
            # cost scaling
            mean_col = float(np.mean(_col_inf(P))) if P.nnz else 0.0
            gamma = max(mean_col, _inf_norm(q))
            gamma = 1.0 / np.clip(gamma if gamma >= 1e-4 else 1.0, 1e-4, 1e4)
            P.data *= gamma
            q = q * gamma
            c *= gamma
        self.D, self.E, self.c = D, E, c
        self.P, self.q, self.C = P, q, C
        finite_l = problem.l > -INF
        finite_u = problem.u < INF
        self.l = np.where(finite_l, E * problem.l, -INF)
        self.u = np.where(finite_u, E * problem.u, INF)


class _KktSolver:
    """LU of the quasi-definite KKT matrix ``[[P + sigma I, C'], [C, -diag(1/rho)]]``."""

    def __init__(self, P, C, sigma: float):
        self.P, self.C, self.sigma = P, C, sigma
        self.n = P.shape[0]

    def factor(self, rho_vec) -> None:
        self.rho_vec = rho_vec
        K = sp.bmat([[self.P + self.sigma * sp.eye(self.n), self.C.T],
                     [self.C, sp.diags(-1.0 / rho_vec)]], format="csc")
        try:
            # quasi-definite: any symmetric ordering factors without pivoting
            self.lu = spla.splu(K, permc_spec="COLAMD", diag_pivot_thresh=0.0,
                                options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise QpError(f"KKT factorization failed: {exc}") from None

    def solve(self, x, z, y, q):
        sol = self.lu.solve(np.concatenate([self.sigma * x - q, z - y / self.rho_vec]))
        xt, nu = sol[:self.n], sol[self.n:]
        return xt, z + (nu - y) / self.rho_vec


class _BandedSolver:
    """Cholesky of the reduced system ``P + sigma I + C' diag(rho) C`` in band form.

    Rows are grouped by their rho value so a rho change only re-weights
    precomputed band matrices.  Worth it when a reverse Cuthill-McKee ordering
    gives a narrow band, as for stage-ordered MPC problems.
    """

    def __init__(self, P, C, sigma: float, perm, bw: int, grams: dict):
        self.P, self.C, self.sigma = P, C, sigma
        self.n = P.shape[0]
        self.perm, self.bw = perm, bw
        self.Cr, self.CTr = sp.csr_matrix(C), sp.csr_matrix(C.T)
        self.base = self._band(sp.csr_matrix(P)[perm][:, perm] + sigma * sp.eye(self.n))
        self._groups = {key: self._band(_permute(G, perm)) for key, G in grams.items()}

    @classmethod
    def try_build(cls, P, C, sigma: float, rho_vec, max_entries: float = 4e6):
        n, Cr = P.shape[0], sp.csr_matrix(C)
        # small systems: dense Gram products are cheaper than sparse ones
        dense = n * n <= max_entries
        grams = {rows.tobytes(): _gram(Cr, rows, dense) for rows in _rho_groups(rho_vec)}
        pattern = abs(P) + sp.eye(n)
        for G in grams.values():
            pattern = pattern + sp.csr_matrix(np.abs(G) if dense else abs(G))
        pattern = sp.csr_matrix(pattern)
        perm = reverse_cuthill_mckee(pattern, symmetric_mode=True)
        coo = pattern[perm][:, perm].tocoo()
        bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        if (bw + 1) * n > max_entries or 2 * bw > n:
            return None
        return cls(P, C, sigma, perm, bw, grams)

    def _band(self, M) -> np.ndarray:
        """Lower band of a symmetric matrix, in LAPACK lower band storage."""
        ab = np.zeros((self.bw + 1, self.n))
        if sp.issparse(M):
            coo = M.tocoo()
            coo.sum_duplicates()
            low = coo.row >= coo.col
            ab[(coo.row - coo.col)[low], coo.col[low]] = coo.data[low]
        else:
            for d in range(self.bw + 1):
                ab[d, : self.n - d] = np.diagonal(M, -d)
        return ab

    def factor(self, rho_vec) -> None:
        self.rho_vec = rho_vec
        ab = self.base.copy()
        for rows in _rho_groups(rho_vec):
            key = rows.tobytes()
            if key not in self._groups:
                self._groups[key] = self._band(_permute(_gram(self.Cr, rows, False), self.perm))
            ab += rho_vec[rows[0]] * self._groups[key]
        try:
            self.chol = sla.cholesky_banded(ab, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise QpError(f"reduced system factorization failed: {exc}") from None

    def solve(self, x, z, y, q):
        rhs = self.sigma * x - q + self.CTr @ (self.rho_vec * z - y)
        xt = np.empty(self.n)
        xt[self.perm] = sla.cho_solve_banded((self.chol, True), rhs[self.perm], check_finite=False)
        return xt, self.Cr @ xt


def _rho_groups(rho_vec):
    return [np.flatnonzero(rho_vec == value) for value in np.unique(rho_vec)]


def _gram(C, rows, dense: bool):
    Cg = C[rows]
    if dense:
        Cg = Cg.toarray()
        return Cg.T @ Cg
    return (Cg.T @ Cg).tocsr()


def _permute(M, perm):
    return M[np.ix_(perm, perm)] if isinstance(M, np.ndarray) else M[perm][:, perm]


class QpSolver:
    """Reusable solver for one problem structure.

    ``update(q=..., l=..., u=...)`` changes vector data without refactoring;
    the previous iterate is kept as a warm start.
    """

    def __init__(self, problem: QpProblem, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        _check_psd(problem.P)
        self.problem = problem
        self.scaling = _Scaling(problem, self.settings.scaling_iter)
        n, m = problem.n, problem.m
        self.x = np.zeros(n)
        self.z = np.zeros(m)
        self.y = np.zeros(m)
        self.rho = self.settings.rho
        self._set_rho_vec()
        self.linsys = self._make_linsys()
        self._factor()

    # -- data updates

    def update(self, q=None, l=None, u=None) -> None:
        s, pr = self.scaling, self.problem
        if q is not None:
            pr.q = np.asarray(q, dtype=float)
            s.q = s.c * s.D * pr.q
        if l is not None:
            pr.l = np.maximum(np.asarray(l, dtype=float), -INF)
            s.l = np.where(pr.l > -INF, s.E * pr.l, -INF)
        if u is not None:
            pr.u = np.minimum(np.asarray(u, dtype=float), INF)
            s.u = np.where(pr.u < INF, s.E * pr.u, INF)
        if np.any(pr.l > pr.u):
            raise QpError("lower bound exceeds upper bound")
        if l is not None or u is not None:
            old = self.rho_vec
            self._set_rho_vec()
            if not np.array_equal(old, self.rho_vec):
                self._factor()

    def warm_start(self, x=None, y=None) -> None:
        """Warm start from unscaled primal/dual guesses."""
        s = self.scaling
        if x is not None:
            self.x = np.asarray(x, dtype=float) / s.D
            self.z = s.C @ self.x
        if y is not None:
            self.y = np.asarray(y, dtype=float) * s.c / s.E

    # -- internals

    def _set_rho_vec(self) -> None:
        s = self.scaling
        rho = np.full(self.problem.m, self.rho)
        free = (s.l <= -INF) & (s.u >= INF)
        eq = np.abs(s.u - s.l) < 1e-10
        rho[free] = RHO_MIN
        rho[eq] = RHO_EQ_FACTOR * self.rho
        self.rho_vec = rho

    def _make_linsys(self):
        s, st = self.scaling, self.settings
        if st.linear_solver not in ("auto", "kkt", "banded"):
            raise ValueError(f"unknown linear solver {st.linear_solver!r}")
        if st.linear_solver != "kkt":
            banded = _BandedSolver.try_build(s.P, s.C, st.sigma, self.rho_vec)
            if banded is not None:
                return banded
            if st.linear_solver == "banded":
                raise QpError("problem has no narrow-band ordering")
        return _KktSolver(s.P, s.C, st.sigma)

    def _factor(self) -> None:
        self.linsys.factor(self.rho_vec)

    def _residuals(self, x, z, y):
        s = self.scaling
        Cx = s.C @ x
        Px = s.P @ x
        Cty = s.C.T @ y
        Einv, Dinv = 1.0 / s.E, 1.0 / s.D
        prim = _inf_norm(Einv * (Cx - z))
        dual = _inf_norm(Dinv * (Px + s.q + Cty)) / s.c
        prim_scale = max(_inf_norm(Einv * Cx), _inf_norm(Einv * z))
        dual_scale = max(_inf_norm(Dinv * Px), _inf_norm(Dinv * Cty), _inf_norm(Dinv * s.q)) / s.c
        return prim, dual, prim_scale, dual_scale

    def _primal_infeasible(self, dy) -> bool:
        s = self.scaling
        ndy = _inf_norm(s.E * dy)
        if ndy < 1e-30:
            return False
        eps = self.settings.eps_prim_inf * ndy
        if _inf_norm((s.C.T @ dy) / s.D) > eps:
            return False
        up = np.where(s.u < INF, s.u, 0.0) @ np.maximum(dy, 0)
        lo = np.where(s.l > -INF, s.l, 0.0) @ np.minimum(dy, 0)
        # infinite bounds paired with the wrong sign of dy rule out the certificate
        if np.any((s.u >= INF) & (dy > eps)) or np.any((s.l <= -INF) & (dy < -eps)):
            return False
        return up + lo < -eps

    def _dual_infeasible(self, dx) -> bool:
        s = self.scaling
        ndx = _inf_norm(s.D * dx)
        if ndx < 1e-30:
            return False
        eps = self.settings.eps_dual_inf * ndx
        if _inf_norm((s.P @ dx) / s.D) > s.c * eps or s.q @ dx >= s.c * eps:
            return False
        Cdx = (s.C @ dx) / s.E
        ok_hi = (s.u >= INF) | (Cdx <= eps)
        ok_lo = (s.l <= -INF) | (Cdx >= -eps)
        return bool(np.all(ok_hi & ok_lo))

    def _new_rho(self, prim, dual, ps, ds) -> float:
        ratio = (prim / max(ps, 1e-30)) / max(dual / max(ds, 1e-30), 1e-30)
        return float(np.clip(self.rho * np.sqrt(ratio), RHO_MIN, RHO_MAX))

    def solve(self) -> QpSolution:
        st = self.settings
        s = self.scaling
        t0 = time.perf_counter()
        x, z, y = self.x, self.z, self.y
        status, it = MAX_ITER, 0
        rho_updates = 0
        prim = dual = np.inf
        for it in range(1, st.max_iter + 1):
            x_prev, z_prev, y_prev = x, z, y
            xt, zt = self.linsys.solve(x, z, y, s.q)
            x = st.alpha * xt + (1 - st.alpha) * x_prev
            zr = st.alpha * zt + (1 - st.alpha) * z_prev
            z = np.clip(zr + y / self.rho_vec, s.l, s.u)
            y = y + self.rho_vec * (zr - z)

            check = it % st.check_interval == 0 or it == st.max_iter
            adapt = st.adaptive_rho_interval and it % st.adaptive_rho_interval == 0
            if check or adapt:
                prim, dual, ps, ds = self._residuals(x, z, y)
            if check:
                eps_p = st.eps_abs + st.eps_rel * ps
                eps_d = st.eps_abs + st.eps_rel * ds
                if prim <= eps_p and dual <= eps_d:
                    status = SOLVED
                    break
                if self._primal_infeasible(y - y_prev):
                    status = PRIMAL_INFEASIBLE
                    break
                if self._dual_infeasible(x - x_prev):
                    status = DUAL_INFEASIBLE
                    break
            if adapt:
                new_rho = self._new_rho(prim, dual, ps, ds)
                if new_rho > 5 * self.rho or new_rho < 0.2 * self.rho:
                    self.rho = new_rho
                    self._set_rho_vec()
                    self._factor()
                    rho_updates += 1
        self.x, self.z, self.y = x, z, y

        x_out = s.D * x
        y_out = s.E * y / s.c
        polished = False
        if st.polish and status == SOLVED:
            px, py = self._polish(z)
            if px is not None:
                old = max(kkt_residuals(self.problem, x_out, y_out))
                new = max(kkt_residuals(self.problem, px, py))
                if new <= old:
                    x_out, y_out, polished = px, py, True
        pr, du = kkt_residuals(self.problem, x_out, y_out)
        if status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE):
            obj = np.inf if status == PRIMAL_INFEASIBLE else -np.inf
        else:
            obj = self.problem.objective(x_out)
        return QpSolution(x_out, y_out, status, pr, du, it, time.perf_counter() - t0, obj,
                          polished, rho_updates, {"rho": self.rho})

    def _polish(self, z_scaled):
        """Solve the equality-constrained QP on the guessed active set.

        The guess comes from the ADMM iterate; rows the solution then violates
        are added and wrong-signed multipliers dropped, for a few rounds.
        """
        pr, st, sc = self.problem, self.settings, self.scaling
        n = pr.n
        eq = (pr.l == pr.u) & (pr.l > -INF)
        # guess the active set in the scaled space the iteration ran in
        lower = (z_scaled - sc.l < -self.y) | eq
        upper = (sc.u - z_scaled < self.y) & ~lower
        for _ in range(st.polish_rounds):
            act = np.flatnonzero(lower | upper)
            k = len(act)
            Ca = pr.C[act]
            K = sp.bmat([[pr.P, Ca.T], [Ca, None]], format="csc") if k else sp.csc_matrix(pr.P)
            delta = np.concatenate([np.full(n, st.polish_delta), np.full(k, -st.polish_delta)])
            try:
                lu = spla.splu(sp.csc_matrix(K + sp.diags(delta)))
            except RuntimeError:
                return None, None
            rhs = np.concatenate([-pr.q, np.where(lower, pr.l, pr.u)[act]])
            sol = lu.solve(rhs)
            for _ in range(st.polish_refine_iter):
                sol = sol + lu.solve(rhs - K @ sol)
            if not np.all(np.isfinite(sol)):
                return None, None
            xp = sol[:n]
            yp = np.zeros(pr.m)
            yp[act] = sol[n:]
            Cx = pr.C @ xp
            free = ~(lower | upper)
            below = free & (Cx < pr.l - 1e-9 * (1 + np.abs(pr.l)))
            above = free & (Cx > pr.u + 1e-9 * (1 + np.abs(pr.u)))
            bad_lo = lower & ~eq & (yp > 1e-9)
            bad_hi = upper & ~eq & (yp < -1e-9)
            if not (below.any() or above.any() or bad_lo.any() or bad_hi.any()):
                return xp, yp
            lower = (lower & ~bad_lo) | below
            upper = (upper & ~bad_hi) | above
        return None, None


def solve(problem: QpProblem, settings: QpSettings | None = None, **overrides) -> QpSolution:
    settings = settings or QpSettings()
    for k, v in overrides.items():
        setattr(settings, k, v)
    return QpSolver(problem, settings).solve()


# ----------------------------------------------------- MPC condensation

def condense(mpc) -> QpProblem:
    """Assemble the lifted-space MPC as a sparse QP.

    Decision vector ``[z_1 .. z_N, u_0 .. u_{N-1}]``; rows are, in order: the
    dynamics (one block of ``d_z`` per stage), input bounds, start-point
    equalities ``c1'u_k = 0`` and end-point inequalities ``c2'u_k <= -eps``.
    ``mpc`` needs attributes ``A, B, z0, zr, Q, QN, R, N, u_min, u_max, c1, c2, eps``
    (see ``formtwin.mpc.MpcProblem``).
    """
    A, B = np.asarray(mpc.A, dtype=float), np.asarray(mpc.B, dtype=float)
    N = int(mpc.N)
    d_z, p = B.shape
    if A.shape != (d_z, d_z) or np.shape(mpc.z0) != (d_z,) or np.shape(mpc.zr) != (d_z,):
        raise QpError(f"MPC dimension mismatch: A {A.shape}, B {B.shape}, "
                      f"z0 {np.shape(mpc.z0)}, zr {np.shape(mpc.zr)}")
    Q, QN, R = (np.asarray(v, dtype=float) for v in (mpc.Q, mpc.QN, mpc.R))
    if Q.shape != (d_z,) or QN.shape != (d_z,) or R.shape != (p,):
        raise QpError("Q, QN must be length-d_z diagonals and R a length-p diagonal")
    nz, nu = N * d_z, N * p

    # cost: stage k = 0 is constant (z_0 fixed); stages 1..N-1 use Q, stage N uses QN
    zdiag = np.concatenate([np.tile(Q, N - 1), QN])
    P = sp.diags(np.concatenate([2 * zdiag, np.tile(2 * R, N)]), format="csc")
    zr = np.asarray(mpc.zr, dtype=float)
    q = np.concatenate([-2 * zdiag * np.tile(zr, N), np.zeros(nu)])

    # dynamics: z_{k+1} - A z_k - B u_k = 0, with A z_0 moved to the right-hand side
    Sz = sp.eye(nz) - sp.kron(sp.eye(N, k=-1), sp.csc_matrix(A))
    Su = -sp.kron(sp.eye(N), sp.csc_matrix(B))
    dyn = sp.hstack([Sz, Su])
    b_dyn = np.zeros(nz)
    b_dyn[:d_z] = A @ np.asarray(mpc.z0, dtype=float)

    Iu = sp.hstack([sp.csc_matrix((nu, nz)), sp.eye(nu)])
    c1 = np.asarray(mpc.c1, dtype=float).reshape(1, p)
    c2 = np.asarray(mpc.c2, dtype=float).reshape(1, p)
    H2 = sp.hstack([sp.csc_matrix((N, nz)), sp.kron(sp.eye(N), sp.csc_matrix(c1))])
    G2 = sp.hstack([sp.csc_matrix((N, nz)), sp.kron(sp.eye(N), sp.csc_matrix(c2))])

    u_min = np.broadcast_to(np.asarray(mpc.u_min, dtype=float), (p,))
    u_max = np.broadcast_to(np.asarray(mpc.u_max, dtype=float), (p,))
    C = sp.vstack([dyn, Iu, H2, G2], format="csc")
    l = np.concatenate([b_dyn, np.tile(u_min, N), np.zeros(N), np.full(N, -INF)])
    u = np.concatenate([b_dyn, np.tile(u_max, N), np.zeros(N), np.full(N, -mpc.eps)])
    return QpProblem(P, q, C, l, u)


# ------------------------------------------------------------- debugging

def dump_problem(problem: QpProblem, path) -> None:
    """Plain-text sparse triplets: ``<block> <row> <col> <value>`` per line."""
    lines = [f"# n {problem.n} m {problem.m}"]
    for name, M in (("P", problem.P), ("C", problem.C)):
        coo = M.tocoo()
        lines += [f"{name} {i} {j} {float(v)!r}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    for name, v in (("q", problem.q), ("l", problem.l), ("u", problem.u)):
        lines += [f"{name} {i} 0 {float(val)!r}" for i, val in enumerate(v)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_problem(path) -> QpProblem:
    text = Path(path).read_text().splitlines()
    header = text[0].split()
    n, m = int(header[2]), int(header[4])
    trip = {"P": ([], [], []), "C": ([], [], [])}
    vec = {"q": np.zeros(n), "l": np.zeros(m), "u": np.zeros(m)}
    for line in text[1:]:
        name, i, j, v = line.split()
        if name in trip:
            for lst, val in zip(trip[name], (int(i), int(j), float(v))):
                lst.append(val)
        else:
            vec[name][int(i)] = float(v)
    P = sp.csc_matrix((trip["P"][2], (trip["P"][0], trip["P"][1])), shape=(n, n))
    C = sp.csc_matrix((trip["C"][2], (trip["C"][0], trip["C"][1])), shape=(m, n))
    return QpProblem(P, vec["q"], C, vec["l"], vec["u"])
