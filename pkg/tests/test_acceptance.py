"""End-to-end acceptance gate: one PASS/FAIL line per criterion."""
import json
import time

import numpy as np
import pytest

from formtwin.adapt import RlsState, rls_update
from formtwin.cli import main
from formtwin.koopman import TrainConfig, compute_loss, gradient_check, train
from formtwin.mpc import G2_EPS, MpcSpec, build_problem, envelope_bounds, lift_target, run_closed_loop, time_resolve
from formtwin.plant import Plant, PlantParams, moderate_target, simulate_plan
from formtwin.qp import SOLVED, QpProblem, kkt_residuals, solve
from formtwin.reduction import (chebyshev_basis, energy_fraction, fit_chebyshev, fit_pod, jacobi_svd,
                                project_pod, reconstruct_chebyshev, reconstruct_pod)
from formtwin.toolpath import lhs_sequences

from oracles import active_set_qp, random_box_qp, reference_loss, weighted_lstsq_B
from test_koopman import TINY, linear_episodes, tiny_model, tiny_windows

SEEDS = range(10)
DRIFT = 1.6


@pytest.fixture(scope="module")
def trained(reduced_split, default_bases):
    t0 = time.perf_counter()
    result = train(reduced_split[0], TrainConfig(), reduced_split[1], default_bases.fingerprint)
    return result.model, time.perf_counter() - t0


@pytest.fixture(scope="module")
def control_spec(reduced_split):
    lo, hi = envelope_bounds(reduced_split[0], 0.1)
    return MpcSpec(u_min=lo, u_max=hi)


@pytest.fixture(scope="module")
def closed_loop(trained, control_spec, default_bases):
    """Seeded runs: nominal plant with adaptation, drifted plant with and without it."""
    model, _ = trained
    target = moderate_target(PlantParams())
    runs = {}
    for key, drift, adapt in (("nominal", 1.0, True), ("drift_on", DRIFT, True), ("drift_off", DRIFT, False)):
        runs[key] = []
        for seed in SEEDS:
            t0 = time.perf_counter()
            trace = run_closed_loop(Plant(PlantParams(seed=seed, yield_drift=drift)), model, control_spec,
                                    target, default_bases, adapt=adapt)
            runs[key].append((trace, time.perf_counter() - t0))
    return runs


def test_criterion_1_reduction_fidelity(acceptance):
    t0 = time.perf_counter()
    episodes = simulate_plan(lhs_sequences(seed=0), PlantParams())
    X = np.hstack([e.X for e in episodes])
    U = np.hstack([e.U for e in episodes])
    energy = energy_fraction(fit_pod(X, 8), 4)
    basis = chebyshev_basis(5)
    err = np.abs(reconstruct_chebyshev(basis, fit_chebyshev(basis, U)) - U).max()
    elapsed = time.perf_counter() - t0
    ok = len(episodes) == 80 and energy >= 0.995 and err <= 0.25 and elapsed < 5
    acceptance(1, ok, f"energy(r=4)={energy:.5f} cheb_max_err={err:.3f}mm runtime={elapsed:.2f}s")
    assert ok


def test_criterion_2_svd_oracle(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        M = rng.normal(size=(8, int(rng.integers(8, 121))))
        _, s, _ = jacobi_svd(M)
        ref = np.sqrt(np.sort(np.linalg.eigvalsh(M @ M.T))[::-1])
        worst = max(worst, float(np.max(np.abs(s - ref) / ref)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 10
    acceptance(2, ok, f"max_rel_err={worst:.2e} runtime={elapsed:.2f}s")
    assert ok


def test_criterion_3_training_sanity(acceptance, trained, default_split, default_bases, reduced_split):
    # linear system x' = 0.9 x + 0.1 u with r = p = 1
    lin = train(linear_episodes(60, 1), TrainConfig(decoder_init="zero"), linear_episodes(10, 2)).model
    lin_err = max(abs(lin.predict_one_step(e.x_tilde[:, k], e.u_tilde[:, k])[0] - e.x_tilde[0, k + 1])
                  for e in linear_episodes(10, 3) for k in range(6))

    model, elapsed = trained
    val_eps, val_red = default_split[1], reduced_split[1]
    errs = [reconstruct_pod(default_bases.pod, model.predict_one_step(r.x_tilde[:, k], r.u_tilde[:, k]))
            - e.X[:, k + 1] for e, r in zip(val_eps, val_red) for k in range(e.n_cycles)]
    mae = np.abs(errs).mean(axis=0)
    tip = np.mean([abs(e.X[-1, -1]) for e in default_split[0] + val_eps])
    ratio = float(mae.max() / tip)

    grad_err = gradient_check(tiny_model(1), *tiny_windows(1), TrainConfig(**TINY))
    ok = lin_err < 1e-3 and ratio <= 0.2 and grad_err < 1e-4 and elapsed < 900
    acceptance(3, ok, f"linear_err={lin_err:.1e} plant_mae_max={mae.max():.2f}mm ratio={ratio:.3f} "
                      f"grad_rel_err={grad_err:.1e} train={elapsed:.0f}s")
    assert ok


def test_criterion_4_loss_equivalence(acceptance):
    cfg = TrainConfig(**TINY)
    worst = 0.0
    for seed in range(100):
        model, (Xw, Uw) = tiny_model(seed), tiny_windows(seed)
        total, _, _ = compute_loss(model, Xw, Uw, cfg)
        ref = reference_loss(model, Xw, Uw, cfg.alphas, cfg.weight_decay, cfg.rollout)
        worst = max(worst, abs(total - ref) / abs(ref))
    ok = worst < 1e-10
    acceptance(4, ok, f"max_rel_diff={worst:.1e} over 100 models")
    assert ok


def test_criterion_5_qp_correctness(acceptance, trained, control_spec, default_bases):
    # the residual bar is an absolute one, so the relative tolerance is switched off
    rng = np.random.default_rng(5)
    dev = kkt = 0.0
    for _ in range(50):
        P, q, C, lo, hi = random_box_qp(rng)
        x_ref, _ = active_set_qp(P, q, C, lo, hi)
        prob = QpProblem(P, q, C, lo, hi)
        sol = solve(prob, eps_abs=1e-5, eps_rel=0.0)
        dev = max(dev, float(np.abs(sol.x - x_ref).max()))
        kkt = max(kkt, *kkt_residuals(prob, sol.x, sol.dual))

    model, _ = trained
    z0 = model.lift(np.zeros(model.r))
    zr = lift_target(model, moderate_target(PlantParams()), default_bases)
    n_var = build_problem(model, control_spec, z0, zr).n_variables
    resolve, mpc_sol = time_resolve(model, control_spec, z0, zr)
    ok = (dev < 1e-4 and kkt < 1e-5 and n_var == 1590 and resolve < 2.0
          and mpc_sol.status == SOLVED)
    acceptance(5, ok, f"max_dev={dev:.1e} max_kkt={kkt:.1e} n_var={n_var} slowest_cold_resolve={resolve:.3f}s "
                      f"mpc_residuals={mpc_sol.primal_residual:.1e}/{mpc_sol.dual_residual:.1e} "
                      f"({mpc_sol.iterations} it)")
    assert ok


def test_criterion_6_constraint_enforcement(acceptance, closed_loop):
    runs = [t for group in closed_loop.values() for t, _ in group]
    paths = [np.asarray(r.applied_toolpath) for t in runs for r in t.records]
    start = max(abs(p[0]) for p in paths)
    end = max(p[-1] for p in paths)
    ok = len(runs) >= 20 and start <= 1e-6 and end <= -G2_EPS
    acceptance(6, ok, f"runs={len(runs)} paths={len(paths)} max|w(0)|={start:.1e} max w(120)={end:.3g}")
    assert ok


def test_criterion_7_closed_loop_tracking(acceptance, closed_loop):
    runs = closed_loop["nominal"]
    hits = sum(t.final_deviation < 1.5 and t.applied_count <= 6 for t, _ in runs)
    slowest = max(s for _, s in runs)
    ok = hits >= 9 and slowest < 60
    devs = ", ".join(f"{t.final_deviation:.2f}/{t.applied_count}" for t, _ in runs)
    acceptance(7, ok, f"reached {hits}/10 (dev mm/cycles: {devs}) slowest={slowest:.1f}s")
    assert ok


def test_criterion_8_adaptation_benefit(acceptance, closed_loop):
    on = np.array([t.final_deviation for t, _ in closed_loop["drift_on"]])
    off = np.array([t.final_deviation for t, _ in closed_loop["drift_off"]])
    wins = int(np.sum(on < off))
    ratio = float(on.mean() / off.mean())
    ok = wins >= 9 and ratio < 0.5
    acceptance(8, ok, f"wins={wins}/10 mean_on={on.mean():.2f} mean_off={off.mean():.2f} "
                      f"ratio={ratio:.2f} worst_pair_ratio={np.max(on / off):.2f}")
    assert ok


def test_criterion_9_rls_oracle(acceptance):
    rng = np.random.default_rng(9)
    worst, sigma2 = 0.0, 0.0
    for i in range(100):
        lam = (0.9, 1.0)[i % 2]
        d_z, p, t = int(rng.integers(2, 12)), int(rng.integers(1, 6)), int(rng.integers(1, 40))
        B0 = rng.normal(size=(d_z, p))
        U, E = rng.normal(size=(t, p)), rng.normal(size=(t, d_z))
        p0 = float(rng.uniform(1e-3, 1.0))
        state, B = RlsState.initial(p, lam, p0), B0
        for e, u in zip(E, U):
            state, B_new = rls_update(state, B, e, u)
            if min(B.shape) > 1:
                sigma2 = max(sigma2, float(np.linalg.svd(B_new - B, compute_uv=False)[1]))
            B = B_new
        ref = weighted_lstsq_B(B0, p0 * np.eye(p), E, U, lam)
        worst = max(worst, float(np.abs(B - ref).max()))
    ok = worst < 1e-8 and sigma2 < 1e-10
    acceptance(9, ok, f"max_abs_diff={worst:.1e} max_second_sv={sigma2:.1e}")
    assert ok


def test_criterion_10_determinism(acceptance, tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "doe": {"sequences": 24},
        "train": {"epochs": 8, "lifted_dim": 32, "hidden_enc": [16], "hidden_dec": [16]},
        "validation": {"replicates": 2}, "mpc": {"max_cycles": 3}}))
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for cmd in (["doe"], ["simulate"], ["fit-reduction"], ["train"], ["validate"],
                    ["control", "--adapt", "off", "--drift", str(DRIFT)],
                    ["control", "--adapt", "on", "--drift", str(DRIFT)], ["report"]):
            assert main(["--manifest", str(manifest), "--out-dir", str(out), *cmd]) == 0, cmd
    compared = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                      if p.suffix in (".json", ".csv", ".svg"))
    differ = [str(p) for p in compared if (outs[0] / p).read_bytes() != (outs[1] / p).read_bytes()]
    ok = not differ and len(compared) >= 15
    acceptance(10, ok, f"{len(compared)} metrics/report files compared, differing: {differ or 'none'}")
    assert ok
