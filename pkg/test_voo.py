#!/usr/bin/env python3
"""
Tests for Voronoi Optimistic Optimization and the run bookkeeping around it.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import VooConfig
from errors import ObjectiveFailure
from voo import (SAMPLE_KINDS, VooState, budget_summary, random_search_run, run_log, run_seed,
                 sample_candidate, trace_statistics, voo_init, voo_run, voo_step,
                 voronoi_radius)

TARGET = np.array([3.0, -4.0])


def sphere(z) -> float:
    return float(np.sum((np.asarray(z) - TARGET) ** 2))


def two_point_state(seed: int = 0) -> VooState:
    state = VooState(np.random.default_rng(seed))
    state.add(np.zeros(2), 0.0, "init")
    state.add(np.array([3.0, 0.0]), 9.0, "init")
    return state


def test_budget_and_log_columns():
    result = voo_run(VooConfig(), sphere, seed=7)
    log = run_log(result.state)
    assert len(log) == 46
    assert list(log.columns) == ["eval_index", "z1", "z2", "value", "best_so_far", "sample_kind"]
    assert list(log["sample_kind"][:16]) == ["init"] * 16
    assert set(log["sample_kind"]) <= set(SAMPLE_KINDS)


def test_run_log_appends_extra_columns():
    result = voo_run(VooConfig(n_init=3, iters=2), sphere, seed=0)
    extras = [{"pa_mpjpe": v, "n_tot": 0} for v in result.state.values]
    log = run_log(result.state, extras)
    assert list(log.columns)[-2:] == ["pa_mpjpe", "n_tot"]
    assert list(log["pa_mpjpe"]) == list(log["value"])
    with pytest.raises(ValueError):
        run_log(result.state, extras[:-1])


def test_same_seed_same_run():
    a = voo_run(VooConfig(), sphere, seed=5)
    b = voo_run(VooConfig(), sphere, seed=5)
    c = voo_run(VooConfig(), sphere, seed=6)
    assert np.array_equal(np.vstack(a.state.points), np.vstack(b.state.points))
    assert a.state.kinds == b.state.kinds
    assert not np.array_equal(np.vstack(a.state.points), np.vstack(c.state.points))


def test_trace_is_best_so_far():
    result = voo_run(VooConfig(iters=10), sphere, seed=1)
    trace = result.trace
    assert np.all(np.diff(trace) <= 0.0)
    assert trace[-1] == result.best_value == min(result.state.values)
    assert sphere(result.best_point) == result.best_value


def test_points_stay_in_the_box():
    cfg = VooConfig(box_lo=-1.0, box_hi=1.0, sigma_c=5.0, n_switch=0)
    result = voo_run(cfg, lambda z: float(np.sum((z - 0.99) ** 2)), seed=3)
    points = np.vstack(result.state.points)
    assert np.all(points >= -1.0) and np.all(points <= 1.0)


def test_init_then_one_step():
    cfg = VooConfig(n_init=5)
    state = voo_init(cfg, sphere, seed=11)
    assert state.kinds == ["init"] * 5
    assert state.best_value == min(state.values)
    voo_step(state, cfg, sphere)
    assert len(state.values) == 6
    assert state.values[-1] == sphere(state.points[-1])
    assert state.kinds[-1] in SAMPLE_KINDS


def test_voronoi_radius_is_squared_distance():
    state = two_point_state()
    state.add(np.array([0.0, 5.0]), 25.0, "init")
    assert voronoi_radius(state) == pytest.approx(9.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_local_samples_fall_inside_the_radius(seed):
    state = two_point_state(seed)
    candidate, kind = sample_candidate(state, VooConfig(p_global=0.0))
    assert kind in ("local_uniform", "local_gaussian")
    assert float(np.sum(candidate ** 2)) < 9.0


def test_gaussian_after_switch():
    state = two_point_state(4)
    candidate, kind = sample_candidate(state, VooConfig(p_global=0.0, n_switch=0))
    assert kind == "local_gaussian"
    assert float(np.sum(candidate ** 2)) < 9.0


def test_fallback_after_max_inner_draws():
    state = two_point_state()
    candidate, kind = sample_candidate(state, VooConfig(p_global=0.0, max_inner=0))
    assert kind == "fallback"
    assert np.all(np.abs(candidate) <= 15.0)


def test_single_point_samples_globally():
    state = VooState(np.random.default_rng(0))
    state.add(np.zeros(2), 1.0, "init")
    assert sample_candidate(state, VooConfig(p_global=0.0))[1] == "global"


def test_p_global_one_is_pure_global():
    result = voo_run(VooConfig(p_global=1.0, iters=12), sphere, seed=2)
    assert result.state.kinds[16:] == ["global"] * 12


def test_ties_keep_the_earliest_point():
    state = VooState(np.random.default_rng(0))
    state.add(np.array([1.0, 1.0]), 2.0, "init")
    state.add(np.array([-1.0, -1.0]), 2.0, "init")
    assert state.best == 0


def test_objective_errors_are_wrapped():
    def broken(z):
        raise RuntimeError("solver crashed")

    with pytest.raises(ObjectiveFailure):
        voo_run(VooConfig(n_init=1, iters=0), broken, seed=0)
    with pytest.raises(ObjectiveFailure):
        voo_run(VooConfig(n_init=1, iters=0), lambda z: math.nan, seed=0)


def test_random_search_uses_the_same_budget():
    result = random_search_run(VooConfig(), sphere, seed=9)
    assert len(result.state.values) == 46
    # same seed, same initial design as VOO
    voo = voo_run(VooConfig(), sphere, seed=9)
    assert np.array_equal(np.vstack(result.state.points[:16]), np.vstack(voo.state.points[:16]))


def test_run_seeds_are_offsets():
    assert [run_seed(123456789, i) for i in range(3)] == [123456789, 123456790, 123456791]


def test_trace_statistics():
    stats = trace_statistics([[3.0, 2.0, 1.0], [5.0, 4.0, 0.0]])
    assert list(stats["median"]) == [4.0, 3.0, 0.5]
    assert list(stats["min"]) == [3.0, 2.0, 0.0]
    with pytest.raises(ValueError):
        trace_statistics([])


def test_budget_summary():
    summary = budget_summary({"latent": [[2.0, 1.0], [3.0, 3.0]], "direct": [[5.0, 5.0]]})
    assert list(summary["model"]) == ["latent", "direct"]
    assert summary.loc[0, "best_mean"] == pytest.approx(2.0)
    assert summary.loc[1, "runs"] == 1


@pytest.mark.slow
def test_sphere_median_over_seeds():
    cfg = VooConfig()
    voo = [voo_run(cfg, sphere, seed=run_seed(cfg.seed, i)).best_value for i in range(10)]
    rnd = [random_search_run(cfg, sphere, seed=run_seed(cfg.seed, i)).best_value for i in range(10)]
    assert np.median(voo) < 1.0
    assert np.median(voo) < np.median(rnd)
