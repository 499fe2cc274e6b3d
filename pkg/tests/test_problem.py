import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from priorgsa.benchmarks.linear import (FORWARD_MATRIX, THETA_TRUE, linear_analytic_posterior,
                                        linear_problem, simulate_linear_data)
from priorgsa.benchmarks.seir import (NOMINAL_THETA, XI_NOMINAL, seir_prior_family,
                                      seir_problem, simulate_seir_data)
from priorgsa.exceptions import DomainError, EvaluationError
from priorgsa.problem import (ForwardModel, GaussianNoiseModel, GaussianPrior,
                              GaussianPriorFamily, HyperparameterBox, InverseProblem,
                              log_likelihood, log_posterior_unnormalized, log_prior)


def noiseless_linear():
    return linear_problem(data=simulate_linear_data(noiseless=True))


def test_likelihood_zero_residual():
    p = noiseless_linear()
    assert log_likelihood(p.forward, p.noise, THETA_TRUE) == 0.0


def test_likelihood_at_origin():
    p = noiseless_linear()
    d = FORWARD_MATRIX @ THETA_TRUE
    assert np.isclose(p.log_likelihood(np.zeros(2)), -0.5 * d @ d, rtol=1e-14)


def test_likelihood_correlated_noise_matches_direct_solve(rng):
    A = rng.standard_normal((5, 3))
    L = rng.standard_normal((5, 5))
    cov = L @ L.T + 5 * np.eye(5)
    d = rng.standard_normal(5)
    theta = rng.standard_normal(3)
    r = A @ theta - d
    expect = -0.5 * r @ np.linalg.solve(cov, r)
    got = log_likelihood(ForwardModel.linear(A), GaussianNoiseModel(d, cov), theta)
    assert np.isclose(got, expect, rtol=1e-12)


def test_likelihood_seir_noiseless_is_zero():
    data = simulate_seir_data(noiseless=True)
    p = seir_problem(data)
    assert p.log_likelihood(NOMINAL_THETA) == 0.0


def test_likelihood_shift_invariance(rng):
    A = rng.standard_normal((4, 2))
    c = rng.standard_normal(4)
    d = rng.standard_normal(4)
    theta = rng.standard_normal(2)
    base = log_likelihood(ForwardModel.linear(A), GaussianNoiseModel.iid(d, 1.0), theta)
    shifted = ForwardModel(2, 4, lambda th: A @ th + c)
    other = log_likelihood(shifted, GaussianNoiseModel.iid(d + c, 1.0), theta)
    assert np.isclose(base, other, rtol=1e-12)


def test_forward_failure_is_evaluation_error():
    def bad(theta):
        raise FloatingPointError("diverged")
    fm = ForwardModel(2, 3, bad)
    with pytest.raises(EvaluationError) as info:
        fm(np.array([1.0, 2.0]))
    assert np.allclose(info.value.theta, [1.0, 2.0])


def test_forward_wrong_output_shape():
    fm = ForwardModel(2, 3, lambda th: np.zeros(4))
    with pytest.raises(EvaluationError):
        fm(np.zeros(2))


def test_noise_covariance_must_be_spd():
    with pytest.raises(ValueError):
        GaussianNoiseModel(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_standard_normal_log_prior():
    fam = GaussianPriorFamily(HyperparameterBox([-1.0, 0.5], [1.0, 2.0]), [0], [1])
    assert np.isclose(log_prior(fam, [0.0, 1.0], [0.0]), -0.5 * np.log(2 * np.pi))


def test_linear_prior_at_nominal():
    p = linear_problem()
    assert np.isclose(p.log_prior(np.ones(4), np.ones(2)), -np.log(2 * np.pi), rtol=1e-14)


def test_seir_prior_normalization_constant():
    fam = seir_prior_family()
    prior = fam.prior(XI_NOMINAL)
    expect = -0.5 * np.sum(np.log(2 * np.pi * XI_NOMINAL[4:]))
    assert np.isclose(log_prior(fam, XI_NOMINAL, prior.mean), expect, rtol=1e-14)


def test_log_prior_matches_scipy(rng):
    for _ in range(20):
        m = rng.standard_normal(3)
        v = rng.uniform(0.1, 3, 3)
        th = rng.standard_normal(3)
        ref = stats.multivariate_normal(m, np.diag(v)).logpdf(th)
        assert np.isclose(GaussianPrior(m, v).logpdf(th), ref, rtol=1e-12)


def test_log_prior_integrates_to_one():
    m = np.array([0.3, -1.2])
    v = np.array([0.5, 2.0])
    prior = GaussianPrior(m, v)
    sd = np.sqrt(v)
    g = [np.linspace(m[i] - 6 * sd[i], m[i] + 6 * sd[i], 801) for i in range(2)]
    T0, T1 = np.meshgrid(*g, indexing="ij")
    dens = np.exp(prior.logpdf(np.stack([T0.ravel(), T1.ravel()], axis=1))).reshape(T0.shape)
    total = trapezoid(trapezoid(dens, g[1], axis=1), g[0])
    assert abs(total - 1.0) < 1e-6


def test_prior_outside_box_raises():
    p = linear_problem()
    with pytest.raises(DomainError):
        p.log_prior(np.array([1.0, 1.0, 1.0, 2.0]), np.zeros(2))


def test_box_requires_lower_below_upper_and_names_component():
    with pytest.raises(DomainError, match="sigma"):
        HyperparameterBox([0.0, 1.0], [1.0, 1.0], ("mu", "sigma"))


def test_family_fixed_slots():
    box = HyperparameterBox([0.0], [1.0], ("m",))
    fam = GaussianPriorFamily(box, [0, None], [None, None], fixed_mean=[0, 5.0],
                              fixed_var=[2.0, 3.0])
    prior = fam.prior([0.25])
    assert np.allclose(prior.mean, [0.25, 5.0])
    assert np.allclose(prior.var, [2.0, 3.0])


def test_variance_slot_needs_positive_lower_bound():
    box = HyperparameterBox([0.0, -1.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        GaussianPriorFamily(box, [0], [1])


def test_posterior_is_definitional_sum(rng):
    p = linear_problem()
    for _ in range(10):
        xi = p.box.from_unit(rng.random(4))
        th = rng.standard_normal(2)
        assert log_posterior_unnormalized(p, xi, th) == p.log_likelihood(th) + p.log_prior(xi, th)


def test_linear_posterior_matches_quadrature():
    """Grid-normalized unnormalized posterior against the closed-form Gaussian."""
    p = linear_problem(data=simulate_linear_data(noiseless=True))
    xi = np.ones(4)
    mean, cov = linear_analytic_posterior(p, xi)
    sd = np.sqrt(np.diag(cov))
    g = [np.linspace(mean[i] - 8 * sd[i], mean[i] + 8 * sd[i], 201) for i in range(2)]
    T0, T1 = np.meshgrid(*g, indexing="ij")
    th = np.stack([T0.ravel(), T1.ravel()], axis=1)
    lp = np.array([p.log_posterior(xi, t) for t in th])
    dens = np.exp(lp - lp.max()).reshape(T0.shape)
    Z = trapezoid(trapezoid(dens, g[1], axis=1), g[0])
    w0 = trapezoid(dens, g[1], axis=1) / Z
    qmean = np.array([trapezoid(w0 * g[0], g[0]),
                      trapezoid(trapezoid(dens * T1, g[1], axis=1), g[0]) / Z])
    assert np.allclose(qmean, mean, atol=1e-6)
    ref = stats.multivariate_normal(mean, cov).logpdf(th)
    # proportionality constant is theta-independent
    diff = lp - ref
    assert np.ptp(diff) < 1e-10 * max(1.0, abs(diff.mean()))


def test_linear_loglik_maximizer_is_least_squares():
    p = linear_problem()
    ls = np.linalg.lstsq(FORWARD_MATRIX, p.noise.data, rcond=None)[0]
    from scipy.optimize import minimize
    res = minimize(lambda th: -p.log_likelihood(th), np.zeros(2), method="BFGS",
                   options={"gtol": 1e-12})
    assert np.allclose(res.x, ls, atol=1e-6)


def test_inverse_problem_dimension_mismatch():
    p = linear_problem()
    with pytest.raises(ValueError):
        InverseProblem(p.forward, GaussianNoiseModel.iid(np.zeros(3), 1.0), p.prior_family,
                       p.qoi)
