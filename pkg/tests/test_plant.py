import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from formtwin.plant import (Plant, PlantParams, PlantState, apply_cycle, deflection, moderate_target,
                            noise_free_response, reference_toolpath, run_episode, saturation_tip,
                            simulate_plan)
from formtwin.toolpath import DoePlan, lhs_sequences

QUIET = PlantParams(noise_sigma=0.0)
toolpaths = arrays(float, 20, elements=st.floats(-40, 40, allow_nan=False))


def test_zero_toolpath_changes_nothing():
    state, _ = apply_cycle(PlantState.fresh(20), reference_toolpath(QUIET), QUIET)
    new, snap = apply_cycle(state, np.zeros(20), QUIET)
    np.testing.assert_array_equal(new.curvature, state.curvature)
    np.testing.assert_array_equal(new.hardening, state.hardening)
    np.testing.assert_array_equal(snap, deflection(state.curvature, QUIET.station_grid, QUIET.tracker_grid))


def test_sub_yield_is_pure_springback():
    limit = QUIET.yield_threshold / QUIET.demand_gain
    u = 0.99 * limit * np.sin(np.linspace(0, 3, 20))
    new, snap = apply_cycle(PlantState.fresh(20), u, QUIET)
    assert np.all(new.curvature == 0.0) and np.all(snap == 0.0)


def test_hardening_shrinks_repeated_increment():
    u = reference_toolpath(QUIET)
    s1, _ = apply_cycle(PlantState.fresh(20), u, QUIET)
    s2, _ = apply_cycle(s1, u, QUIET)
    first = np.abs(s1.curvature)
    second = np.abs(s2.curvature - s1.curvature)
    nz = first > 0
    assert nz.any()
    assert np.all(second[nz] < first[nz])


def test_increment_matches_hand_computation():
    p = QUIET
    u = np.full(20, -20.0)
    new, _ = apply_cycle(PlantState.fresh(20), u, p)
    d = p.demand_gain * -20.0
    expected = -(abs(d) - p.yield_threshold) * p.plastic_gain
    np.testing.assert_allclose(new.curvature, expected)
    np.testing.assert_allclose(new.hardening, abs(expected) / p.yield_threshold)


def test_deflection_of_uniform_curvature_is_parabolic():
    y = np.linspace(0, 120, 20)
    yt = np.append(y[[5, 10, 19]], 240.0)
    k = 1e-3
    w = deflection(np.full(20, k), y, yt)
    # trapezoid is exact at the stations for a linear slope; beyond them the sheet is straight
    np.testing.assert_allclose(w[:3], 0.5 * k * yt[:3] ** 2, rtol=1e-12)
    assert w[3] == pytest.approx(0.5 * k * 120 ** 2 + k * 120 * 120)


def test_episode_shape_and_determinism():
    seq = [reference_toolpath(QUIET, a) for a in (10, 20, 30, 30, 20, 10)]
    ep = run_episode(seq, PlantParams(seed=4))
    assert ep.X.shape == (8, 7) and ep.U.shape == (20, 6)
    np.testing.assert_array_equal(ep.X[:, 0], 0.0)
    again = run_episode(seq, PlantParams(seed=4))
    np.testing.assert_array_equal(ep.X, again.X)
    with pytest.raises(ValueError):
        run_episode([], QUIET)


def test_monotone_sign_toolpaths_grow_tip_deflection():
    seq = [reference_toolpath(QUIET, a) for a in (25, 15, 30, 20, 28, 12)]
    tip = np.abs(run_episode(seq, QUIET).X[-1])
    assert np.all(np.diff(tip) >= 0)


def test_drift_weakens_response():
    u = [reference_toolpath(QUIET)] * 3
    nominal = noise_free_response(QUIET, u)[-1]
    drifted = noise_free_response(QUIET.with_(yield_drift=1.6), u)[-1]
    assert abs(drifted) < abs(nominal)


def test_saturation_and_moderate_target():
    sat = saturation_tip(QUIET)
    target = moderate_target(QUIET)
    assert target[-1] == pytest.approx(0.6 * sat, rel=1e-6)
    assert 10 <= abs(sat) <= 60


def test_replication_bias_bounded():
    p = PlantParams(noise_sigma=0.0, replication_bias=1.5, seed=9)
    plant = Plant(p)
    snap = plant.apply(np.zeros(20))
    assert abs(snap[-1]) <= 1.5 and snap[-1] != 0.0


def test_simulate_plan_grid_mismatch():
    plan = lhs_sequences(seq_count=2, seed=0)
    bad = DoePlan(plan.base_paths, plan.sequences, plan.seed, list(np.linspace(0, 100, 20)))
    with pytest.raises(ValueError, match="grid"):
        simulate_plan(bad, QUIET)
    eps = simulate_plan(plan, QUIET)
    assert len(eps) == 2 and eps[0].X.shape == (8, 7)


def test_default_dataset_scale(default_episodes):
    tips = np.abs([e.X[-1, -1] for e in default_episodes])
    assert len(default_episodes) == 80
    assert 5 <= np.median(tips) <= 40


def test_params_validation():
    for bad in (dict(yield_threshold=0), dict(plastic_gain=1.5), dict(hardening=-1),
                dict(station_grid=(0.0, 0.0, 1.0))):
        with pytest.raises(ValueError):
            PlantParams(**bad)


@given(st.lists(toolpaths, min_size=1, max_size=5))
def test_hardening_non_decreasing(seq):
    state = PlantState.fresh(20)
    for u in seq:
        new, _ = apply_cycle(state, u, QUIET)
        assert np.all(new.hardening >= state.hardening)
        state = new


@given(toolpaths, st.integers(1, 4))
def test_repeated_input_gives_non_increasing_increments(u, reps):
    state = PlantState.fresh(20)
    prev = None
    for _ in range(reps + 1):
        new, _ = apply_cycle(state, u, QUIET)
        inc = np.abs(new.curvature - state.curvature)
        if prev is not None:
            assert np.all(inc <= prev + 1e-15)
        prev, state = inc, new


@given(arrays(float, 20, elements=st.floats(0, 1e-3)), st.sampled_from([-1.0, 1.0]))
def test_clamp_and_monotone_magnitude(kappa, sign):
    w = deflection(sign * kappa, QUIET.station_grid, QUIET.tracker_grid)
    assert deflection(kappa, QUIET.station_grid, [0.0])[0] == 0.0
    assert np.all(np.diff(np.abs(w)) >= -1e-12)


@given(st.lists(toolpaths, min_size=1, max_size=4))
def test_noise_off_is_bit_identical(seq):
    a = run_episode(seq, QUIET)
    b = run_episode(seq, QUIET)
    np.testing.assert_array_equal(a.X, b.X)
