import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lodpd.errors import FitError, ParameterError
from lodpd.ergodic import (
    DecayReport,
    bound_curve,
    certify_two_parameter,
    decay_rate_fit,
    permutation_noise_floor,
    replicate_values,
    tv_lower_bound,
)
from lodpd.lod_coefficients import tail_bounds
from lodpd.pd_measures import RankedMass, evaluate, sample_pd_many


def test_identical_sets_zero(rng):
    a = sample_pd_many(1.0, 0.0, 500, rng=rng)
    assert tv_lower_bound(a, list(a)) == 0.0


def test_disjoint_supports_near_one(rng):
    a = rng.uniform(0, 1, 2000)
    assert tv_lower_bound(a, a + 5) == 1.0


def test_known_distance(rng):
    # TV(U[0,1], U[0.3,1.3]) = 0.3; binning on quantiles resolves it almost exactly
    a, b = rng.uniform(0, 1, 200_000), rng.uniform(0.3, 1.3, 200_000)
    assert tv_lower_bound(a, b, bins=50) == pytest.approx(0.3, abs=0.01)


@given(st.lists(st.floats(0, 1), min_size=3, max_size=60), st.lists(st.floats(0, 1), min_size=3, max_size=60),
       st.randoms(use_true_random=False))
def test_symmetry_and_relabelling(a, b, random):
    a, b = np.array(a), np.array(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v = tv_lower_bound(a, b, bins=7)
        assert v == tv_lower_bound(b, a, bins=7)
        perm = list(a)
        random.shuffle(perm)
        assert v == tv_lower_bound(np.array(perm), b, bins=7)
    assert 0 <= v <= 1


def test_degenerate_binning_warns():
    with pytest.warns(RuntimeWarning):
        assert tv_lower_bound(np.ones(10), np.ones(5)) == 0.0


def test_bad_inputs():
    with pytest.raises(ParameterError):
        tv_lower_bound(np.array([]), np.ones(3))
    with pytest.raises(ParameterError):
        tv_lower_bound(np.ones(3), np.ones(3), bins=1)


def test_noise_floor_between_pd_samples(rng):
    a = evaluate(sample_pd_many(1.0, 0.0, 10_000, rng=rng))
    b = evaluate(sample_pd_many(1.0, 0.0, 10_000, rng=rng))
    # each of 30 bins contributes E|f_a - f_b| = sqrt(2/pi) sqrt(2 p / n), p = 1/30
    expected = 0.5 * 30 * math.sqrt(2 / math.pi) * math.sqrt(2 / 30 / 10_000)
    assert expected == pytest.approx(0.031, abs=5e-4)
    assert tv_lower_bound(a, b) < 1.5 * expected
    floor = permutation_noise_floor(a, b, rng=rng)
    assert expected < floor < 1.6 * expected


def test_bound_curve():
    assert bound_curve(1.0, [1.0])[0] == pytest.approx(6 * math.exp(-2), rel=1e-14)
    assert bound_curve(1.0, [1.0])[0] == pytest.approx(0.8120, abs=1e-4)
    assert bound_curve(2.0, [0.0])[0] == 10.0
    for theta in (-0.5, 0.3, 4.0):
        for t in (0.1, 2.0):
            assert bound_curve(theta, [t])[0] == tail_bounds(theta, 2, t)[1]


def test_exact_exponential_fit():
    t = np.linspace(0.1, 3, 12)
    rate, r2 = decay_rate_fit(t, 0.7 * np.exp(-2.3 * t))
    assert abs(rate - 2.3) <= 1e-10 and abs(r2 - 1) <= 1e-10


def test_fit_window_and_nonpositive_points():
    t = np.linspace(0, 2, 11)
    y = np.exp(-t)
    y[3] = 0.0
    y[5] = -1.0
    rate, _ = decay_rate_fit(t, y)
    assert rate == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(FitError):
        decay_rate_fit(t, y, window=(0.0, 0.5))
    with pytest.raises(ParameterError):
        decay_rate_fit(t, y[:-1])


def test_report_invariants():
    with pytest.raises(ParameterError):
        DecayReport([1.0], [1.5], [1.0])
    with pytest.raises(ParameterError):
        DecayReport([1.0], [0.5], [0.0])
    rep = DecayReport([1.0, 2.0], [0.2, 0.3], [0.5, 0.25])
    assert not rep.passed and rep.violations.tolist() == [False, True]


def test_replicates_do_not_depend_on_workers():
    x0 = RankedMass([1.0])
    a = replicate_values("transition", 1.0, 0.0, x0, 0.5, 1200, seed=5, workers=1)
    b = replicate_values("transition", 1.0, 0.0, x0, 0.5, 1200, seed=5, workers=2)
    assert np.array_equal(a, b)
    with pytest.raises(ParameterError):
        replicate_values("bogus", 1.0, 0.0, x0, 0.5, 10, seed=5)


def test_certify_small_run(rng):
    rep = certify_two_parameter(1.0, 0.0, RankedMass([1.0]), [0.25, 1.0, 3.0], 1000, rng)
    assert rep.passed
    assert rep.tv_lower[0] > rep.tv_lower[-1]
    # at t = 0.25 the transition law is still far from stationary
    assert rep.tv_lower[0] > 0.3
    with pytest.raises(ParameterError):
        certify_two_parameter(1.0, 0.0, RankedMass([1.0]), [1.0], 100, rng)
