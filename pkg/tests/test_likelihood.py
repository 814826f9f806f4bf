import numpy as np
import pytest
from hypothesis import given, strategies as st

from hawkes_agg.core import EventSequence, ModelParams, simulate
from hawkes_agg.likelihood import (build_recursions, evaluate, fit_mle, gradient, hessian, loglik)
from hawkes_agg.optimize import OptimizerSettings
from oracles import central_diff, direct_R, direct_loglik
from test_core import random_params


@st.composite
def sequences(draw, max_events=200):
    P = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(0, max_events))
    times = rng.uniform(0, 50.0, n)
    labels = rng.integers(0, P, n)
    ev = EventSequence.from_labels(np.unique(times), labels[:np.unique(times).size], P, 50.0)
    return random_params(rng, P), ev


@given(sequences())
def test_recursions_match_direct_sums(pe):
    params, ev = pe
    rs = build_recursions(ev, params.beta)
    for m in range(ev.P):
        for n in range(ev.P):
            b = params.beta[m, n]
            for got, power in ((rs.R, 0), (rs.Rp, 1), (rs.Rpp, 2)):
                np.testing.assert_allclose(got[m][n], direct_R(ev.times[m], ev.times[n], b, power),
                                           rtol=1e-11, atol=1e-300)


@given(sequences(max_events=120))
def test_loglik_matches_direct(pe):
    params, ev = pe
    ref = direct_loglik(params.to_vector(), ev.times, ev.horizon)
    np.testing.assert_allclose(loglik(params, ev), ref, rtol=1e-10)


def test_ties_across_processes_do_not_excite():
    ev = EventSequence((np.array([1.0]), np.array([1.0])), 3.0)
    rs = build_recursions(ev, np.ones((2, 2)))
    assert rs.R[0][1][0] == 0.0 and rs.R[1][0][0] == 0.0


@pytest.mark.parametrize("P,seed", [(1, 0), (2, 1), (3, 2)])
def test_gradient_and_hessian_finite_differences(P, seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng, P)
    ev = simulate(params, 80.0 * P, seed)
    x = params.to_vector()

    def f(v):
        return loglik(ModelParams.from_vector(v, P), ev)

    def g(v):
        return gradient(ModelParams.from_vector(v, P), ev)

    fd_g = central_diff(f, x, 1e-6)
    np.testing.assert_allclose(gradient(params, ev), fd_g, rtol=1e-5, atol=1e-5 * np.abs(fd_g).max())
    fd_h = central_diff(g, x, 1e-6)
    H = hessian(params, ev)
    np.testing.assert_allclose(H, fd_h, rtol=1e-4, atol=1e-4 * np.abs(fd_h).max())
    # parameters of different receiving processes never interact
    for m in range(P):
        for k in range(P):
            if m == k:
                continue
            rows = [m] + [P + m * P + j for j in range(P)] + [P + P * P + m * P + j for j in range(P)]
            cols = [k] + [P + k * P + j for j in range(P)] + [P + P * P + k * P + j for j in range(P)]
            assert np.all(H[np.ix_(rows, cols)] == 0.0)


def test_hessian_symmetric(truth):
    ev = simulate(truth, 100.0, 4)
    H = evaluate(truth, ev).hessian
    np.testing.assert_allclose(H, H.T, rtol=1e-12, atol=1e-12)


def test_dimension_mismatch(truth):
    ev = EventSequence((np.array([1.0]),), 2.0)
    with pytest.raises(ValueError):
        loglik(truth, ev)


def test_fit_poisson_closed_form():
    p = ModelParams([1.3], [[0.0]], [[1.0]])
    ev = simulate(p, 500.0, 9)
    init = ModelParams([0.5], [[0.0]], [[1.0]])
    res = fit_mle(ev, init, fit_excitation=False)
    np.testing.assert_allclose(res.params.nu[0], ev.counts[0] / 500.0, rtol=1e-7)
    assert res.converged


def test_fit_mle_recovers_truth(truth):
    ev = simulate(truth, 2000.0, 21)
    res = fit_mle(ev)
    assert res.converged
    np.testing.assert_allclose(res.params.to_vector(), truth.to_vector(), rtol=0.35)
    # the optimum is a stationary point
    assert np.max(np.abs(gradient(res.params, ev) * res.params.to_vector())) < 1e-4


def test_fit_mle_monotone_trajectory(truth):
    ev = simulate(truth, 300.0, 3)
    res = fit_mle(ev, settings=OptimizerSettings(max_iter=50))
    values = [loglik(ModelParams.from_vector(x, 2), ev) for x in res.trajectory]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
