import json
import math

import numpy as np
import pytest
from scipy import stats

from lodpd.combinatorics import Partition
from lodpd.errors import LimitError, ParameterError
from lodpd.lod_coefficients import d_vector
from lodpd.pd_measures import RankedMass, evaluate, sample_pd, sample_pd_many
from lodpd.transition import (
    TransitionSampleRecord,
    chain_transitions,
    density_truncated,
    draw_line_count,
    sample_transition,
    sample_transitions,
)

X = RankedMass.from_atoms([0.5, 0.3, 0.2])


def test_record_invariants():
    y = RankedMass([1.0])
    with pytest.raises(ValueError):
        TransitionSampleRecord(X, 1.0, 0.0, 1.0, 3, None, y)
    with pytest.raises(ValueError):
        TransitionSampleRecord(X, 1.0, 0.0, 1.0, 1, Partition((1,)), y)
    with pytest.raises(ValueError):
        TransitionSampleRecord(X, 1.0, 0.0, 1.0, -1, None, y)


def test_record_json_round_trip(rng):
    for _ in range(20):
        rec = sample_transition(X, 1.0, 0.3, 0.4, rng)
        back = TransitionSampleRecord.from_dict(json.loads(rec.to_json()))
        assert back.chosen_n == rec.chosen_n and back.eta == rec.eta
        assert np.array_equal(back.result.atoms, rec.result.atoms)


def test_eta_present_iff_two_or_more_lines(rng):
    for rec in sample_transitions(X, 2.0, 0.0, 0.3, 200, rng):
        assert (rec.eta is not None) == (rec.chosen_n >= 2)
        if rec.eta is not None:
            assert rec.eta.n == rec.chosen_n
            assert rec.eta.length <= 3  # three atoms, no dust


def test_parameter_errors(rng):
    with pytest.raises(ParameterError):
        sample_transition(X, 0.0, 0.0, 1.0, rng)
    with pytest.raises(ParameterError):
        sample_transition(X, 1.0, 0.0, 0.0, rng)
    with pytest.raises(ParameterError):
        sample_transition(X, -0.6, 0.5, 1.0, rng)


def test_line_count_frequencies(rng):
    theta, t, size = 1.0, 0.3, 20_000
    n = np.array([draw_line_count(theta, t, rng) for _ in range(size)])
    d = d_vector(theta, t, 1e-12).merged()
    n = np.maximum(n, 1)
    obs = np.bincount(n, minlength=d.size)[1:]
    exp = d[1:] * size
    # pool sparse cells at the top
    keep = np.flatnonzero(exp >= 5)
    last = keep[-1]
    obs = np.append(obs[: last], obs[last:].sum())
    exp = np.append(exp[: last], exp[last:].sum())
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 0.01


def test_large_t_is_a_fresh_draw(rng):
    a = evaluate([sample_transition(RankedMass([1.0]), 1.0, 0.0, 50.0, rng).result for _ in range(4000)])
    b = evaluate(sample_pd_many(1.0, 0.0, 4000, rng=rng))
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_small_t_continuity(rng):
    x = RankedMass.from_atoms([0.9, 0.06, 0.04])
    y1 = [sample_transition(x, 1.0, 0.0, 0.05, rng).result.top for _ in range(2000)]
    assert abs(np.mean(y1) - 0.9) <= 0.05


@pytest.mark.parametrize("theta,alpha", [(1.0, 0.0), (1.0, 0.5)])
def test_stationarity_small(theta, alpha, rng):
    size = 3000
    xs = sample_pd_many(theta, alpha, size, rng=rng)
    ys = evaluate([sample_transition(x, theta, alpha, 0.5, rng).result for x in xs])
    zs = evaluate(sample_pd_many(theta, alpha, size, rng=rng))
    assert stats.ks_2samp(ys, zs).pvalue > 0.01


def test_chain_transitions_runs(rng):
    y = chain_transitions(X, 1.0, 0.0, [0.2, 0.3], rng)
    assert abs(math.fsum(y.atoms) + y.remainder - 1) <= 1e-12


def test_density_symmetric():
    y = RankedMass.from_atoms([0.7, 0.2, 0.1])
    a = density_truncated(0.5, X, y, 1.0, 0.0, 8)
    b = density_truncated(0.5, y, X, 1.0, 0.0, 8)
    assert a.value == b.value
    assert density_truncated(0.5, X, y, 1.0, 0.4, 6).value == density_truncated(0.5, y, X, 1.0, 0.4, 6).value


def test_density_large_t():
    y = RankedMass.from_atoms([0.7, 0.2, 0.1])
    est = density_truncated(40.0, X, y, 1.0, 0.0, 6)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert est.coefficient_tail < 1e-100


def test_density_integrates_to_one(rng):
    ys = sample_pd_many(1.0, 0.0, 2000, rng=rng)
    vals = np.array([density_truncated(1.0, X, y, 1.0, 0.0, 8).value for y in ys])
    assert abs(vals.mean() - 1) <= 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_density_limits():
    with pytest.raises(LimitError):
        density_truncated(1.0, X, X, 1.0, 0.0, 31)
    with pytest.raises(ParameterError):
        density_truncated(1.0, X, X, 1.0, 0.0, 0)
