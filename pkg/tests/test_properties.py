"""Property-based invariants (hypothesis, at least 200 examples each)."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from priorgsa.benchmarks.seir import NOMINAL_THETA, POPULATION, integrate_seir_states
from priorgsa.importance import (PosteriorSampleSet, effective_sample_size, ess_from_log_weights,
                                 is_moment, is_weights)
from priorgsa.problem import GaussianPrior, GaussianPriorFamily, HyperparameterBox
from priorgsa.sampling import lhs_sample
from priorgsa.surrogates import (PCESurrogate, SWELMSurrogate, fit_pce, fit_swelm, pce_sobol,
                                 swelm_sobol)
from priorgsa.surrogates.pce import design_matrix, total_degree_indices

PROFILE = settings(max_examples=200, deadline=None,
                   suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-5.0, 5.0, allow_nan=False)
BOX2 = HyperparameterBox([-1.0, 0.5, 0.5], [1.0, 2.0, 2.0], ("m", "v1", "v2"))
FAMILY = GaussianPriorFamily(BOX2, [0, None], [1, 2], fixed_mean=[0.0, 0.3])
IS = GaussianPrior([0.0, 0.0], [2.0, 2.0])


@st.composite
def sample_sets(draw):
    n = draw(st.integers(1, 30))
    theta = draw(arrays(float, (n, 2), elements=finite))
    order = np.concatenate([np.arange(n), draw(arrays(np.int64, draw(st.integers(0, 20)),
                                                      elements=st.integers(0, n - 1)))])
    q = draw(arrays(float, n, elements=st.floats(-10, 10, allow_nan=False)))
    s = PosteriorSampleSet.from_draws(theta, order, lambda t: 0.0, IS)
    return s.with_qoi_values(q)


xis = st.tuples(st.floats(-1, 1), st.floats(0.5, 2.0), st.floats(0.5, 2.0)).map(np.array)


@PROFILE
@given(sample_sets(), xis)
def test_is_weights_normalized_and_bounded(s, xi):
    w = is_weights(s, FAMILY, xi)
    assert np.isclose(w.expand(s.order).sum(), 1.0, rtol=1e-12)
    assert w.u.max() == 1.0 and np.all(w.u >= 0)
    m = is_moment(s, FAMILY, xi)
    tol = 1e-12 * max(1.0, np.abs(s.q).max())
    assert s.q.min() - tol <= m <= s.q.max() + tol
    ess = effective_sample_size(s, FAMILY, xi)
    assert 1.0 - 1e-12 <= ess <= s.M * (1 + 1e-12)


@PROFILE
@given(sample_sets(), xis, st.floats(-50, 50))
def test_is_estimates_invariant_to_weight_scale(s, xi, c):
    shifted = PosteriorSampleSet(s.theta, s.multiplicity, s.q, s.log_is_prior + c, IS, s.order)
    a, b = is_moment(s, FAMILY, xi), is_moment(shifted, FAMILY, xi)
    assert np.isclose(a, b, rtol=1e-10, atol=1e-10)
    assert np.isclose(effective_sample_size(s, FAMILY, xi),
                      effective_sample_size(shifted, FAMILY, xi), rtol=1e-10)
    ones = s.with_qoi_values(1.0)
    assert is_moment(ones, FAMILY, xi) == 1.0


@PROFILE
@given(arrays(float, st.integers(1, 50), elements=st.floats(-30, 30)), st.floats(-100, 100))
def test_raw_ess_shift_invariant(log_w, c):
    a = ess_from_log_weights(log_w)
    assert 1.0 - 1e-12 <= a <= log_w.size * (1 + 1e-12)
    assert np.isclose(a, ess_from_log_weights(log_w + c), rtol=1e-10)


def bounds_ok(rep):
    return rep.constant or not rep.bounds_violations(slack=1e-9)


@PROFILE
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2 ** 32 - 1))
def test_pce_index_bounds(dim, degree, seed):
    rng = np.random.default_rng(seed)
    box = HyperparameterBox(np.zeros(dim), np.ones(dim))
    idx = total_degree_indices(dim, degree)
    c = rng.standard_normal(len(idx)) * (rng.random(len(idx)) < 0.6)
    rep = pce_sobol(PCESurrogate(box, degree, idx, c))
    assert bounds_ok(rep)
    if not rep.constant:
        assert rep.first_order.sum() <= 1 + 1e-9 <= rep.total.sum() + 2e-9


@PROFILE
@given(st.integers(1, 4), st.integers(1, 12), st.floats(0.1, 2.0), st.integers(0, 2 ** 32 - 1))
def test_swelm_index_bounds(dim, width, scale, seed):
    rng = np.random.default_rng(seed)
    box = HyperparameterBox(np.zeros(dim), np.ones(dim))
    W = scale * rng.standard_normal((width, dim)) * (rng.random((width, dim)) < 0.7)
    s = SWELMSurrogate(box, W, rng.uniform(-1, 1, width), rng.standard_normal(width), 0.0, 1.0)
    rep = swelm_sobol(s)
    assert bounds_ok(rep)
    assert np.all(rep.first_order >= -1e-9)


@PROFILE
@given(st.integers(0, 2 ** 32 - 1))
def test_fitted_surrogate_index_bounds(seed):
    rng = np.random.default_rng(seed)
    box = HyperparameterBox(np.zeros(3), np.ones(3))
    X = lhs_sample(box, 40, seed=seed % 1000)
    a = rng.standard_normal(4)
    y = a[0] * X[:, 0] + a[1] * X[:, 1] ** 2 + a[2] * X[:, 0] * X[:, 2] + a[3] * np.sin(3 * X[:, 1])
    assert bounds_ok(pce_sobol(fit_pce(X, y, box, degree=3, cv_folds=5, seed=seed % 7)))
    assert bounds_ok(swelm_sobol(fit_swelm(X, y, box, seed=seed % 7)))


@PROFILE
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_pce_reproduces_polynomials(dim, degree, seed):
    rng = np.random.default_rng(seed)
    box = HyperparameterBox(-rng.random(dim) - 0.1, rng.random(dim) + 0.1)
    idx = total_degree_indices(dim, degree)
    c = rng.standard_normal(len(idx))
    X = lhs_sample(box, 3 * len(idx) + 5, seed=seed % 1000)
    y = design_matrix(2 * box.to_unit(X) - 1, idx) @ c
    s = fit_pce(X, y, box, degree=degree, penalty_grid=[0.0])
    assert np.allclose(s.coefficients, c, atol=1e-8)


@PROFILE
@given(arrays(float, 4, elements=st.floats(-3.0, 3.0)))
def test_seir_population_conserved(shift):
    theta = NOMINAL_THETA + shift
    states = integrate_seir_states(theta, np.array([10.0, 40.0, 75.0]))
    assert np.allclose(states.sum(axis=1), POPULATION, rtol=1e-8)
    assert np.all(states >= -1e-6 * POPULATION)


PROPERTY_TESTS = [test_is_weights_normalized_and_bounded, test_is_estimates_invariant_to_weight_scale,
                  test_raw_ess_shift_invariant, test_pce_index_bounds, test_swelm_index_bounds,
                  test_fitted_surrogate_index_bounds, test_pce_reproduces_polynomials,
                  test_seir_population_conserved]
