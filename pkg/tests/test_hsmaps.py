import numpy as np
import pytest

from priorgsa.benchmarks.linear import (FORWARD_MATRIX, analytic_map_functions,
                                        linear_analytic_hs_maps, linear_analytic_posterior,
                                        linear_problem, quadratic_moments)
from priorgsa.benchmarks.seir import XI_NOMINAL as SEIR_XI, seir_problem
from priorgsa.exceptions import NegativeVarianceError, OptimizationError
from priorgsa.hsmaps import (HSMapEvaluations, MapSolverConfig, _checked_variance,
                             eval_F_map, eval_F_mean, eval_F_var, eval_is_map_over_design,
                             eval_map_over_design, map_objective, solve_map)
from priorgsa.importance import is_standard_error
from priorgsa.io import read_csv
from priorgsa.problem import ForwardModel, InverseProblem


def test_f_mean_and_f_var_against_closed_form(lin, lin_samples, rng):
    X = lin.box.from_unit(rng.random((8, 4)))
    for xi in X:
        m_ex, v_ex = linear_analytic_hs_maps(lin, xi)
        m = eval_F_mean(lin_samples, lin.prior_family, xi)
        se = is_standard_error(lin_samples, lin.prior_family, xi)
        assert abs(m - m_ex) < 4.5 * se
        assert abs(eval_F_var(lin_samples, lin.prior_family, xi) - v_ex) < 0.1 * v_ex


def test_batch_path_equals_pointwise(lin, lin_samples, rng):
    X = lin.box.from_unit(rng.random((5, 4)))
    ev = eval_is_map_over_design(lin_samples, lin.prior_family, X, "var", lin.box.names)
    for xi, v in zip(X, ev.values):
        assert np.isclose(v, eval_F_var(lin_samples, lin.prior_family, xi), rtol=1e-9)
    assert ev.diagnostics["ess"].shape == (5,)
    with pytest.raises(ValueError):
        eval_is_map_over_design(lin_samples, lin.prior_family, X, "map")


def test_quadratic_moments_against_monte_carlo():
    rng = np.random.default_rng(3)
    mean = np.array([0.7, -1.1])
    cov = np.array([[0.4, 0.1], [0.1, 0.2]])
    q = np.sum(rng.multivariate_normal(mean, cov, size=10 ** 7) ** 2, axis=1)
    m, v = quadratic_moments(mean, cov)
    assert abs(q.mean() - m) < 4 * q.std() / np.sqrt(q.size)
    assert abs(q.var() - v) < 5e-3 * v


def test_quadratic_moments_degenerate_limits():
    th = np.array([1.0, -2.0])
    assert quadratic_moments(th, np.zeros((2, 2))) == (5.0, 0.0)
    cov = np.diag([0.5, 2.0])
    assert quadratic_moments(np.zeros(2), cov) == (2.5, 2.0 * (0.25 + 4.0))


def test_vectorized_analytic_maps_match_pointwise(lin, rng):
    f_mean, f_var = analytic_map_functions(lin)
    X = lin.box.from_unit(rng.random((6, 4)))
    ref = np.array([linear_analytic_hs_maps(lin, x) for x in X])
    assert np.allclose(f_mean(X), ref[:, 0], rtol=1e-12)
    assert np.allclose(f_var(X), ref[:, 1], rtol=1e-12)


def test_variance_clamp_and_error():
    assert _checked_variance(2.0, 4.0) == 0.0
    with pytest.warns(RuntimeWarning, match="clamped"):
        assert _checked_variance(1.0, 1.0 - 1e-14) == 0.0
    with pytest.raises(NegativeVarianceError):
        _checked_variance(1.0, 0.9)


def test_hs_evaluations_reject_negative_variance():
    with pytest.raises(ValueError):
        HSMapEvaluations("var", np.zeros((1, 2)), [-1.0])


def test_linear_map_equals_posterior_mean(lin, rng):
    for xi in lin.box.from_unit(rng.random((10, 4))):
        mean, _ = linear_analytic_posterior(lin, xi)
        r = solve_map(lin, xi)
        assert np.allclose(r.theta, mean, atol=1e-8)
        assert r.grad_norm < 1e-8


def as_nonlinear(problem):
    """Same problem without the linear shortcut, to exercise the iterative solver."""
    A = problem.forward.matrix
    fwd = ForwardModel(A.shape[1], A.shape[0], lambda th: A @ th)
    return InverseProblem(fwd, problem.noise, problem.prior_family, problem.qoi)


def test_iterative_solver_agrees_with_normal_equations(lin, rng):
    nl = as_nonlinear(lin)
    for xi in lin.box.from_unit(rng.random((5, 4))):
        a = solve_map(lin, xi)
        b = solve_map(nl, xi)
        assert np.allclose(a.theta, b.theta, atol=1e-6)
        assert b.objective == pytest.approx(a.objective, rel=1e-8)


def test_huge_noise_map_is_prior_mean():
    p = linear_problem()
    from priorgsa.problem import GaussianNoiseModel
    noisy = InverseProblem(p.forward, GaussianNoiseModel(p.noise.data, 1e12 * np.eye(4)),
                           p.prior_family, p.qoi)
    xi = np.array([0.7, 1.2, 0.8, 1.4])
    assert np.allclose(solve_map(noisy, xi).theta, xi[:2], atol=1e-9)
    assert np.allclose(solve_map(as_nonlinear(noisy), xi).theta, xi[:2], atol=1e-6)


def test_map_objective_is_squared_residual_norm_plus_constant(lin, rng):
    xi = np.array([0.9, 1.1, 1.2, 0.8])
    prior = lin.prior_family.prior(xi)
    const = -2.0 * prior.log_norm
    for th in rng.standard_normal((5, 2)):
        r = FORWARD_MATRIX @ th - lin.noise.data
        z = (th - prior.mean) / np.sqrt(prior.var)
        assert np.isclose(map_objective(lin, xi, th), r @ r + z @ z + const, rtol=1e-12)


@pytest.fixture(scope="module")
def seir():
    return seir_problem()


def test_seir_map_seed_independent(seir):
    a = solve_map(seir, SEIR_XI, MapSolverConfig(seed=0))
    b = solve_map(seir, SEIR_XI, MapSolverConfig(seed=99))
    assert np.isclose(a.value, b.value, rtol=1e-6)
    assert a.converged


def test_map_over_design_single_point_and_csv(lin, tmp_path):
    ev = eval_map_over_design(lin, lin.box.center[None, :])
    assert len(ev) == 1 and ev.ok.all()
    assert ev.values[0] == pytest.approx(eval_F_map(lin, lin.box.center))
    p = ev.to_csv(tmp_path / "map.csv", {"seed": 1})
    meta, cols, rows = read_csv(p)
    assert cols == list(lin.box.names) + ["value", "grad_norm", "objective"]
    assert meta["seed"] == 1 and len(rows) == 1


def test_map_over_design_failure_threshold(lin):
    design = lin.box.from_unit(np.linspace(0.05, 0.95, 10)[:, None] * np.ones(4))
    # a QoI that refuses the MAP points of chosen design rows
    targets = set()

    def picky_qoi(th):
        if tuple(np.round(th, 6)) in targets:
            raise OptimizationError("synthetic failure")
        return float(th @ th)

    def refuse(row):
        targets.add(tuple(np.round(solve_map(lin, design[row]).theta, 6)))

    p = InverseProblem(lin.forward, lin.noise, lin.prior_family, picky_qoi)
    refuse(0)
    ev = eval_map_over_design(p, design, max_fail_fraction=0.1)
    assert np.isnan(ev.values[0]) and ev.meta["failed"] == [0]
    assert np.all(np.isfinite(ev.values[1:]))
    refuse(1)
    with pytest.raises(OptimizationError, match="2 of 10"):
        eval_map_over_design(p, design, max_fail_fraction=0.1)


def test_map_workers_match_serial(lin, rng):
    X = lin.box.from_unit(rng.random((12, 4)))
    a = eval_map_over_design(as_nonlinear(lin), X, workers=1)
    b = eval_map_over_design(as_nonlinear(lin), X, workers=4)
    assert np.array_equal(a.values, b.values)
