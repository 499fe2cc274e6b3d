import json

import numpy as np
import pytest
from scipy.integrate import quad

from priorgsa.exceptions import DesignTooSmallError
from priorgsa.gsa import pick_freeze_sobol
from priorgsa.problem import HyperparameterBox
from priorgsa.sampling import lhs_sample
from priorgsa.surrogates import (PCESurrogate, SobolIndexReport, SWELMSurrogate, fit_pce,
                                 fit_swelm, load_surrogate, pce_sobol, swelm_sobol)
from priorgsa.surrogates.pce import (design_matrix, l1_path, legendre_1d,
                                     total_degree_indices)
from priorgsa.surrogates.swelm import _exp_mean, sparsify

BOX3 = HyperparameterBox([0.0, -1.0, 2.0], [1.0, 3.0, 2.5], ("a", "b", "c"))


def unit(box, X):
    return 2.0 * box.to_unit(X) - 1.0


def test_total_degree_index_count():
    from math import comb
    for n, d in [(1, 4), (4, 5), (8, 6), (3, 0)]:
        idx = total_degree_indices(n, d)
        assert len(idx) == comb(n + d, d)
        assert len({tuple(r) for r in idx}) == len(idx)
        assert idx[0].sum() == 0 and idx.sum(axis=1).max() == d


def test_legendre_orthonormal_under_uniform_measure():
    for j in range(5):
        for k in range(5):
            val = quad(lambda x: 0.5 * legendre_1d(x, 4)[0, j] * legendre_1d(x, 4)[0, k], -1, 1)[0]
            assert np.isclose(val, float(j == k), atol=1e-12)


def poly_target(box):
    # exact expansion: 2 + 1.5 P1(z_a) - 0.8 P2(z_b) + 0.6 P1(z_a) P1(z_b)
    def f(X):
        z = unit(box, X)
        La = legendre_1d(z[:, 0], 2)
        Lb = legendre_1d(z[:, 1], 2)
        return 2.0 + 1.5 * La[:, 1] - 0.8 * Lb[:, 2] + 0.6 * La[:, 1] * Lb[:, 1]
    return f


def test_pce_reproduces_polynomial_and_exact_indices():
    f = poly_target(BOX3)
    X = lhs_sample(BOX3, 200, seed=1)
    s = fit_pce(X, f(X), BOX3, degree=3, penalty_grid=[0.0])
    Xt = lhs_sample(BOX3, 500, seed=2)
    assert np.max(np.abs(s.predict(Xt) - f(Xt))) < 1e-10
    rep = pce_sobol(s)
    var = 1.5 ** 2 + 0.8 ** 2 + 0.6 ** 2
    assert np.allclose(rep.first_order, [1.5 ** 2 / var, 0.8 ** 2 / var, 0.0], atol=1e-10)
    assert np.allclose(rep.total, [(1.5 ** 2 + 0.36) / var, (0.64 + 0.36) / var, 0.0],
                       atol=1e-10)
    assert np.isclose(rep.variance, var, rtol=1e-10)


def test_pce_cross_validated_fit_is_accurate():
    f = poly_target(BOX3)
    X = lhs_sample(BOX3, 150, seed=4)
    s = fit_pce(X, f(X), BOX3, degree=4, cv_folds=10)
    Xt = lhs_sample(BOX3, 500, seed=5)
    assert np.sqrt(np.mean((s.predict(Xt) - f(Xt)) ** 2)) < 1e-3
    assert s.penalty in s.penalty_grid


def test_l1_path_satisfies_lasso_optimality(rng):
    z = rng.uniform(-1, 1, (60, 2))
    idx = total_degree_indices(2, 3)
    Psi = design_matrix(z, idx)
    y = rng.standard_normal(60) + 3 * Psi[:, 1]
    for lam in [0.5, 5.0, 20.0]:
        c = l1_path(Psi, y, [lam])[0]
        g = Psi.T @ (y - Psi @ c)
        assert abs(g[0]) < 1e-8
        act = np.abs(c[1:]) > 1e-12
        assert np.allclose(g[1:][act], lam * np.sign(c[1:][act]), atol=1e-7)
        assert np.all(np.abs(g[1:][~act]) <= lam + 1e-7)


def test_pce_constant_values():
    X = lhs_sample(BOX3, 40, seed=0)
    s = fit_pce(X, np.full(40, 4.2), BOX3, degree=3)
    assert np.allclose(s.predict(X), 4.2)
    rep = pce_sobol(s)
    assert rep.constant and np.all(rep.total == 0) and rep.variance == 0.0


def test_pce_zero_penalty_rank_deficient_raises():
    X = lhs_sample(BOX3, 10, seed=0)
    with pytest.raises(np.linalg.LinAlgError):
        fit_pce(X, X[:, 0], BOX3, degree=4, penalty_grid=[0.0])


def test_pce_design_too_small():
    with pytest.raises(DesignTooSmallError):
        fit_pce(BOX3.center[None, :], [1.0], BOX3)


def test_pce_single_input_and_interaction_only():
    box = HyperparameterBox([-1.0, -1.0], [1.0, 1.0])
    idx = total_degree_indices(2, 2)
    only_x1 = PCESurrogate(box, 2, idx, np.where((idx == [1, 0]).all(1), 1.0, 0.0))
    rep = pce_sobol(only_x1)
    assert np.allclose(rep.first_order, [1, 0]) and np.allclose(rep.total, [1, 0])
    inter = PCESurrogate(box, 2, idx, np.where((idx == [1, 1]).all(1), 1.0, 0.0))
    rep = pce_sobol(inter)
    assert np.allclose(rep.first_order, [0, 0]) and np.allclose(rep.total, [1, 1])


def test_pce_indices_invariant_under_affine_map_of_values():
    f = poly_target(BOX3)
    X = lhs_sample(BOX3, 120, seed=3)
    a = pce_sobol(fit_pce(X, f(X), BOX3, degree=3, penalty_grid=[0.0]))
    b = pce_sobol(fit_pce(X, 7.0 - 3.0 * f(X), BOX3, degree=3, penalty_grid=[0.0]))
    assert np.allclose(a.first_order, b.first_order, atol=1e-10)
    assert np.allclose(a.total, b.total, atol=1e-10)


def test_surrogate_serialization_roundtrip():
    f = poly_target(BOX3)
    X = lhs_sample(BOX3, 100, seed=3)
    Xt = lhs_sample(BOX3, 50, seed=8)
    for s in (fit_pce(X, f(X), BOX3, degree=3), fit_swelm(X, f(X), BOX3, seed=2)):
        back = load_surrogate(json.loads(json.dumps(s.to_dict())))
        assert type(back) is type(s)
        assert np.array_equal(back.predict(Xt), s.predict(Xt))


def test_exp_mean_matches_quadrature():
    for w in [-3.0, -1e-9, 0.0, 1e-9, 0.4, 2.5]:
        ref = quad(lambda z: 0.5 * np.exp(w * z), -1, 1)[0]
        assert np.isclose(_exp_mean(np.array([w]))[0], ref, rtol=1e-13)


def test_sparsify_keeps_largest():
    W = np.array([[0.1, -3.0, 2.0, 0.5]])
    assert np.array_equal(sparsify(W, 0.5), [[0.0, -3.0, 2.0, 0.0]])
    assert np.array_equal(sparsify(W, 0.01), [[0.0, -3.0, 0.0, 0.0]])
    assert np.array_equal(sparsify(W, 1.0), W)


def test_swelm_linear_target():
    X = lhs_sample(BOX3, 400, seed=0)
    f = lambda X: 2 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2]
    s = fit_swelm(X, f(X), BOX3, seed=0)
    assert s.width == 320 // 2
    Xt = lhs_sample(BOX3, 1000, seed=1)
    y = f(Xt)
    assert np.sqrt(np.mean((s.predict(Xt) - y) ** 2)) <= 0.01 * np.ptp(y)


def test_swelm_constant_target():
    X = lhs_sample(BOX3, 50, seed=0)
    s = fit_swelm(X, np.full(50, -1.5), BOX3)
    assert np.allclose(s.predict(X), -1.5)
    assert swelm_sobol(s).constant


def test_swelm_zero_output_weights_flag_constant():
    W = np.ones((3, 3))
    s = SWELMSurrogate(BOX3, W, np.zeros(3), np.zeros(3), 2.0, 1.0)
    rep = swelm_sobol(s)
    assert rep.constant and rep.variance == 0.0


def test_swelm_single_active_column():
    W = np.zeros((4, 3))
    W[:, 1] = [0.5, -1.0, 1.5, 0.2]
    s = SWELMSurrogate(BOX3, W, np.zeros(4), np.array([1.0, 0.3, -0.2, 2.0]), 0.0, 1 / 3)
    rep = swelm_sobol(s)
    assert np.allclose(rep.first_order, [0, 1, 0], atol=1e-12)
    assert np.allclose(rep.total, [0, 1, 0], atol=1e-12)


def test_swelm_closed_form_indices_match_pick_freeze():
    rng = np.random.default_rng(7)
    W = rng.standard_normal((12, 3))
    s = SWELMSurrogate(BOX3, W, rng.uniform(-1, 1, 12), rng.standard_normal(12), 0.3, 1.0)
    cf = swelm_sobol(s)
    mc = pick_freeze_sobol(s.predict, BOX3, 200_000, seed=1)
    assert np.allclose(cf.first_order, mc.first_order, atol=0.02)
    assert np.allclose(cf.total, mc.total, atol=0.02)
    assert not cf.bounds_violations()


def test_swelm_variance_matches_monte_carlo():
    rng = np.random.default_rng(9)
    s = SWELMSurrogate(BOX3, rng.standard_normal((6, 3)), rng.uniform(-1, 1, 6),
                       rng.standard_normal(6), 0.0, 1.0)
    y = s.predict(BOX3.from_unit(np.random.default_rng(1).random((10 ** 6, 3))))
    assert np.isclose(swelm_sobol(s).variance, y.var(), rtol=0.01)


def test_swelm_design_too_small():
    with pytest.raises(DesignTooSmallError):
        fit_swelm(lhs_sample(BOX3, 5, seed=0), np.zeros(5), BOX3)


def test_report_bounds_and_ranking():
    rep = SobolIndexReport(("x", "y", "z"), [0.2, 0.2, -0.01], [0.5, 0.5, 0.0], 1.0, "t")
    assert rep.ranking() == ["x", "y", "z"]
    assert rep.bounds_violations() == ["S[z] = -0.01 < 0"]
    bad = SobolIndexReport(("x", "y"), [0.7, 0.6], [0.6, 1.2], 1.0, "t")
    msgs = bad.bounds_violations()
    assert len(msgs) == 3
    assert any("sum" in m for m in msgs)


def test_report_csv(tmp_path):
    from priorgsa.io import read_csv
    rep = SobolIndexReport(("x", "y"), [0.25, 0.5], [0.5, 0.75], 2.0, "pce", provenance={"N": 9})
    meta, cols, rows = read_csv(rep.to_csv(tmp_path / "s.csv", {"statistic": "mean"}))
    assert cols == ["input", "first_order", "total"]
    assert rows[0][0] == "x" and float(rows[1][2]) == 0.75
    assert meta["N"] == 9 and meta["statistic"] == "mean"
