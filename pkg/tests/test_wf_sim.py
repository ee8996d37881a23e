import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lodpd.combinatorics import Partition
from lodpd.errors import ParameterError
from lodpd.pd_measures import esf_mean
from lodpd.wf_sim import (
    SimConfig,
    SimplexState,
    cir_step,
    diffusion_step,
    drift_neutral,
    drift_selection,
    homozygosity,
    initial_states,
    max_dt,
    simulate_path,
    stationary_importance,
    time_average,
)
from lodpd.ergodic import decay_rate_fit


def finite_k_phi2(theta, K):
    # E sum x_i^2 under Dirichlet(theta/K, ..., theta/K)
    a = theta / K
    return K * a * (a + 1) / (theta * (theta + 1))


def test_simplex_state():
    s = SimplexState(np.array([0.2, 0.8]))
    assert s.K == 2 and s.ranked().top == 0.8
    with pytest.raises(ParameterError):
        SimplexState(np.array([0.2, 0.7]))


def test_config_validation():
    with pytest.raises(ParameterError):
        SimConfig(K=1)
    with pytest.raises(ParameterError):
        SimConfig(theta=0.0)
    with pytest.raises(ParameterError):
        SimConfig(theta=2.0, dt=2e-3)
    with pytest.raises(ParameterError):
        SimConfig(start="random")
    with pytest.raises(ParameterError):
        SimConfig(scheme="rk4")
    assert max_dt(0.5, 0.0) == pytest.approx(2e-3)
    assert max_dt(2.0, 2.0) == 1e-3


@given(st.integers(2, 30), st.floats(-5, 5))
def test_drifts_stay_tangent(K, sigma):
    x = np.random.default_rng(K).dirichlet(np.ones(K))
    assert abs(drift_neutral(x, 1.3).sum()) <= 1e-12
    assert abs(drift_selection(x, sigma).sum()) <= 1e-12


def _increment_moments(step, x, dt, reps, rng):
    X = np.tile(x, (reps, 1))
    inc = step(X, rng) - X
    return inc.mean(axis=0) / dt, np.cov(inc.T) / dt


def test_cir_step_moments(rng):
    theta, dt, x = 2.0, 1e-3, np.array([0.5, 0.3, 0.2])
    mean, cov = _increment_moments(lambda X, r: cir_step(X, theta, dt, r), x, dt, 400_000, rng)
    target_cov = np.diag(x) - np.outer(x, x)
    assert np.abs(cov - target_cov).max() <= 0.01
    # the drift is small next to the noise, so only a loose check is possible
    assert np.abs(mean - drift_neutral(x, theta)).max() <= 0.25


def test_euler_step_covariance(rng):
    dt, x = 1e-4, np.array([0.4, 0.35, 0.25])
    d = np.zeros(3)
    _, cov = _increment_moments(lambda X, r: diffusion_step(X, d, dt, r), x, dt, 200_000, rng)
    assert np.abs(cov - (np.diag(x) - np.outer(x, x))).max() <= 0.01


def test_steps_stay_on_simplex(rng):
    x = initial_states(SimConfig(K=50, theta=0.5, paths=20, start="stationary"), rng)
    for _ in range(50):
        x = cir_step(x, 0.5, 1e-3, rng)
        assert x.min() >= 0 and np.allclose(x.sum(axis=1), 1)
        x = diffusion_step(x, drift_neutral(x, 0.5), 1e-3, rng)
        assert x.min() >= 0 and np.allclose(x.sum(axis=1), 1)


def test_initial_states(rng):
    for start in ("monomorphic", "uniform", "stationary"):
        x = initial_states(SimConfig(K=10, paths=5, start=start), rng)
        assert x.shape == (5, 10) and np.allclose(x.sum(axis=1), 1)


def test_stationary_start_matches_finite_k(rng):
    x = initial_states(SimConfig(K=100, theta=2.0, paths=20_000, start="stationary"), rng)
    v = homozygosity(x)
    assert abs(v.mean() - finite_k_phi2(2.0, 100)) <= 4 * v.std() / math.sqrt(v.size)


def test_paths_are_reproducible():
    cfg = SimConfig(K=10, theta=1.0, dt=1e-3, horizon=0.2, paths=3, seed=9, record_stride=10)
    a, b = simulate_path(cfg, ("phi2", "top1", "state")), simulate_path(cfg, ("phi2", "top1", "state"))
    assert np.array_equal(a.values["state"], b.values["state"])
    assert a.values["phi2"].shape == (21, 3)
    assert a.values["state"].shape == (21, 3, 10)
    assert np.all(a.values["top1"] ** 2 <= a.values["phi2"] + 1e-15)
    with pytest.raises(ParameterError):
        simulate_path(cfg, ("bogus",))


def test_cir_relaxation_rate_matches_generator():
    # G phi2 = 1 + theta/K - (1 + theta) phi2 exactly, for every K
    theta, K = 1.0, 20
    cfg = SimConfig(K=K, theta=theta, dt=1e-3, horizon=1.5, paths=2000, seed=3, record_stride=10)
    rec = simulate_path(cfg)
    target = finite_k_phi2(theta, K)
    rate, r2 = decay_rate_fit(rec.times, np.abs(rec.mean("phi2") - target), (0.05, 1.2))
    assert rate == pytest.approx(theta + 1, rel=0.1)
    assert r2 > 0.95


def test_cir_long_run_matches_finite_k():
    theta, K = 2.0, 20
    cfg = SimConfig(K=K, theta=theta, dt=1e-3, horizon=5.0, paths=400, seed=4, start="stationary",
                    record_stride=20)
    mean, se = time_average(simulate_path(cfg))
    assert abs(mean - finite_k_phi2(theta, K)) <= 4 * se + 2e-3


def test_importance_neutral(rng):
    est = stationary_importance(1.0, 0.0, samples=20_000, rng=rng)
    assert abs(est.estimate - 0.5) <= 4 * est.stderr
    assert est.effective_sample_size == pytest.approx(20_000)


def test_importance_small_sigma_linear_response(rng):
    theta, sigma = 1.0, 0.3
    m1 = esf_mean(theta, Partition((2,)))
    m2 = esf_mean(theta, Partition((4,))) + esf_mean(theta, Partition((2, 2))) / 3
    est = stationary_importance(theta, sigma, samples=40_000, rng=rng)
    linear = m1 + sigma * (m2 - m1 ** 2)
    assert abs(est.estimate - linear) <= 4 * est.stderr + 0.005


def test_importance_bad_theta():
    with pytest.raises(ParameterError):
        stationary_importance(0.0, 1.0, samples=10)
