from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from formtwin.errors import QpError
from formtwin.qp import (DUAL_INFEASIBLE, INF, PRIMAL_INFEASIBLE, SOLVED, QpProblem, QpSettings,
                         QpSolver, condense, dump_problem, kkt_residuals, load_problem, solve)

from oracles import active_set_qp, random_box_qp

TIGHT = dict(eps_abs=1e-9, eps_rel=1e-9)


def test_scalar_lower_bound_example():
    sol = solve(QpProblem([[1.0]], [0.0], [[1.0]], [1.0], [INF]), **TIGHT)
    assert sol.status == SOLVED
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    # multipliers satisfy Px + q + C'y = 0, so a binding lower bound has y < 0
    assert sol.dual[0] == pytest.approx(-1.0, abs=1e-6)


def test_equality_constrained_example():
    P = np.diag([2.0, 2.0])
    prob = QpProblem(P, [-2.0, -6.0], [[1.0, 1.0]], [2.0], [2.0])
    sol = solve(prob, **TIGHT)
    np.testing.assert_allclose(sol.x, [0.0, 2.0], atol=1e-6)
    prob = QpProblem(P, [0.0, 0.0], [[1.0, 1.0]], [2.0], [2.0])
    np.testing.assert_allclose(solve(prob, **TIGHT).x, [1.0, 1.0], atol=1e-6)


def test_unconstrained_minimum_inside_box(rng):
    P, q, C, lo, hi = random_box_qp(rng)
    x_star = np.linalg.solve(P, -q)
    prob = QpProblem(P, q, C, x_star - 10, x_star + 10)
    np.testing.assert_allclose(solve(prob, **TIGHT).x, x_star, atol=1e-6)


@pytest.mark.parametrize("solver", ["kkt", "auto"])
def test_matches_active_set_oracle(solver):
    rng = np.random.default_rng(7)
    for _ in range(5):
        P, q, C, lo, hi = random_box_qp(rng)
        x_ref, y_ref = active_set_qp(P, q, C, lo, hi)
        sol = solve(QpProblem(P, q, C, lo, hi), linear_solver=solver, **TIGHT)
        assert sol.status == SOLVED
        np.testing.assert_allclose(sol.x, x_ref, atol=1e-6)
        np.testing.assert_allclose(sol.dual, y_ref, atol=1e-5)


def test_polish_recovers_exact_active_set(rng):
    P, q, C, lo, hi = random_box_qp(rng)
    x_ref, _ = active_set_qp(P, q, C, lo, hi)
    sol = solve(QpProblem(P, q, C, lo, hi), polish=True)
    assert sol.polished
    np.testing.assert_allclose(sol.x, x_ref, atol=1e-9)


def test_infeasibility_certificates():
    prob = QpProblem([[1.0]], [0.0], [[1.0], [1.0]], [1.0, -INF], [INF, 0.0])
    assert solve(prob).status == PRIMAL_INFEASIBLE
    prob = QpProblem([[0.0]], [1.0], [[0.0]], [0.0], [0.0])
    assert solve(prob).status == DUAL_INFEASIBLE


def test_invalid_problems_raise():
    with pytest.raises(QpError, match="positive semidefinite"):
        QpSolver(QpProblem([[1.0, 2.0], [2.0, 1.0]], [0, 0], np.eye(2), [0, 0], [1, 1]))
    with pytest.raises(QpError, match="symmetric"):
        QpProblem([[1.0, 1.0], [0.0, 1.0]], [0, 0], np.eye(2), [0, 0], [1, 1])
    with pytest.raises(QpError):
        QpProblem(np.eye(2), [0, 0], np.eye(2), [1, 0], [0, 1])
    with pytest.raises(QpError):
        QpProblem(np.eye(2), [0, 0, 0], np.eye(2), [0, 0], [1, 1])


def test_update_and_warm_start_resolve(rng):
    P, q, C, lo, hi = random_box_qp(rng)
    solver = QpSolver(QpProblem(P, q, C, lo, hi), QpSettings(**TIGHT))
    first = solver.solve()
    q2 = q + rng.normal(size=q.size)
    solver.update(q=q2)
    second = solver.solve()
    x_ref, _ = active_set_qp(P, q2, C, lo, hi)
    np.testing.assert_allclose(second.x, x_ref, atol=1e-6)
    solver.update(q=q)
    solver.warm_start(first.x, first.dual)
    assert solver.solve().iterations <= first.iterations


def mpc_data(d_z, p, N, seed=0):
    rng = np.random.default_rng(seed)
    A = 0.9 * np.linalg.qr(rng.normal(size=(d_z, d_z)))[0]
    return SimpleNamespace(A=A, B=rng.normal(size=(d_z, p)), z0=rng.normal(size=d_z),
                           zr=rng.normal(size=d_z), Q=np.ones(d_z), QN=0.1 * np.ones(d_z),
                           R=1e-3 * np.ones(p), N=N, u_min=-5.0, u_max=5.0,
                           c1=np.array([(-1.0) ** i for i in range(p)]), c2=np.ones(p), eps=1e-6)


def test_condense_dimensions():
    prob = condense(mpc_data(260, 5, 6))
    assert prob.n == 1590
    assert prob.m == 6 * 260 + 6 * 5 + 6 + 6
    with pytest.raises(QpError):
        condense(SimpleNamespace(**{**vars(mpc_data(4, 2, 2)), "z0": np.zeros(3)}))


def test_condense_single_stage_by_hand():
    m = mpc_data(2, 2, 1)
    prob = condense(m)
    np.testing.assert_allclose(prob.P.toarray(), np.diag([0.2, 0.2, 2e-3, 2e-3]))
    np.testing.assert_allclose(prob.q[:2], -0.2 * m.zr)
    C = prob.C.toarray()
    np.testing.assert_allclose(C[:2], np.hstack([np.eye(2), -m.B]))
    np.testing.assert_allclose(prob.l[:2], m.A @ m.z0)
    np.testing.assert_allclose(C[-2], [0, 0, 1, -1])
    np.testing.assert_allclose(C[-1], [0, 0, 1, 1])
    assert prob.u[-1] == -1e-6 and prob.l[-2] == prob.u[-2] == 0.0


def test_feasible_trajectory_has_zero_dynamics_residual():
    m = mpc_data(4, 2, 3, seed=2)
    prob = condense(m)
    U = np.array([[0.5, 0.5 - 0.0], [1.0, 1.0], [0.0, 0.0]])
    U[:, 1] = U[:, 0]  # c1'u = 0 for p = 2
    U[:, :] = -np.abs(U)  # c2'u <= -eps when nonzero
    U[2] = [-1.0, -1.0]
    Z, z = [], m.z0
    for k in range(3):
        z = m.A @ z + m.B @ U[k]
        Z.append(z)
    x = np.concatenate([np.ravel(Z), U.ravel()])
    prim, _ = kkt_residuals(prob, x, np.zeros(prob.m))
    assert prim < 1e-12


def test_mpc_qp_matches_oracle_on_small_instance():
    prob = condense(mpc_data(3, 2, 2, seed=4))
    P, C = prob.P.toarray(), prob.C.toarray()
    l = np.where(prob.l <= -INF, -np.inf, prob.l)
    u = np.where(prob.u >= INF, np.inf, prob.u)
    x_ref, _ = active_set_qp(P, prob.q, C, l, u)
    sol = solve(prob, **TIGHT)
    np.testing.assert_allclose(sol.x, x_ref, atol=1e-5)


def test_banded_and_kkt_solvers_agree():
    prob = condense(mpc_data(20, 5, 6, seed=5))
    a = solve(prob, linear_solver="banded", **TIGHT)
    b = solve(prob, linear_solver="kkt", **TIGHT)
    assert a.status == b.status == SOLVED
    np.testing.assert_allclose(a.x, b.x, atol=1e-6)
    with pytest.raises(QpError, match="narrow-band"):
        solve(QpProblem(np.ones((3, 3)) + np.eye(3), np.zeros(3), np.eye(3), -np.ones(3), np.ones(3)),
              linear_solver="banded")


def test_dump_and_load_round_trip(tmp_path, rng):
    P, q, C, lo, hi = random_box_qp(rng, 4)
    prob = QpProblem(P, q, C, lo, hi)
    dump_problem(prob, tmp_path / "qp.txt")
    back = load_problem(tmp_path / "qp.txt")
    np.testing.assert_array_equal(back.P.toarray(), prob.P.toarray())
    np.testing.assert_array_equal(back.u, prob.u)
    assert back.m == prob.m


@settings(max_examples=15)
@given(st.integers(0, 2 ** 16), st.floats(0.01, 100.0))
def test_solution_kkt_and_scaling_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    P, q, C, lo, hi = random_box_qp(rng, 6)
    sol = solve(QpProblem(P, q, C, lo, hi), **TIGHT)
    assert sol.status == SOLVED
    assert max(kkt_residuals(QpProblem(P, q, C, lo, hi), sol.x, sol.dual)) < 1e-5
    scaled = solve(QpProblem(scale * P, scale * q, C, lo, hi), **TIGHT)
    np.testing.assert_allclose(scaled.x, sol.x, atol=1e-5)
    # no random feasible point beats the solution
    pts = rng.uniform(lo, hi, size=(200, 6))
    obj = 0.5 * np.einsum("ij,jk,ik->i", pts, P, pts) + pts @ q
    assert sol.objective <= obj.min() + 1e-6


@settings(max_examples=10)
@given(st.integers(0, 2 ** 16))
def test_sparse_and_dense_inputs_agree(seed):
    rng = np.random.default_rng(seed)
    P, q, C, lo, hi = random_box_qp(rng, 5)
    a = solve(QpProblem(P, q, C, lo, hi), **TIGHT)
    b = solve(QpProblem(sp.csc_matrix(P), q, sp.csc_matrix(C), lo, hi), **TIGHT)
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
