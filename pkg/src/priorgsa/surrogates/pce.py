"""
Sparse polynomial chaos expansions in orthonormal Legendre polynomials.

Coefficients solve an l1-penalized least-squares problem; the penalty is
picked by k-fold cross-validation. Sobol' indices follow from sums of
squared coefficients.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from numpy.polynomial import legendre
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path
from sklearn.model_selection import KFold

from ..exceptions import DesignTooSmallError
from ..problem import HyperparameterBox
from .report import SobolIndexReport


def total_degree_indices(dim: int, degree: int) -> np.ndarray:
    """All multi-indices with total degree ``<= degree``, graded by degree."""
    out = []
    for d in range(degree + 1):
        block = []
        for combo in combinations_with_replacement(range(dim), d):
            alpha = np.zeros(dim, dtype=int)
            for j in combo:
                alpha[j] += 1
            block.append(alpha)
        # reverse-lexicographic within a degree, e.g. (2,0), (1,1), (0,2)
        block.sort(key=lambda a: tuple(-a))
        out.extend(block)
    return np.array(out, dtype=int).reshape(-1, dim)


def legendre_1d(x, degree: int) -> np.ndarray:
    """Orthonormal Legendre values ``sqrt(2k+1) P_k(x)`` for ``k = 0..degree``.

    Orthonormal with respect to the uniform probability measure on ``[-1, 1]``.
    """
    V = legendre.legvander(np.asarray(x, dtype=float), degree)
    return V * np.sqrt(2 * np.arange(degree + 1) + 1)


def design_matrix(z, indices) -> np.ndarray:
    """Basis matrix for standardized inputs ``z`` in ``[-1, 1]^n``."""
    z = np.atleast_2d(z)
    deg = int(indices.max()) if indices.size else 0
    vals = [legendre_1d(z[:, j], deg) for j in range(z.shape[1])]
    Psi = np.ones((z.shape[0], indices.shape[0]))
    for j in range(z.shape[1]):
        Psi *= vals[j][:, indices[:, j]]
    return Psi


@dataclass
class PCESurrogate:
    box: HyperparameterBox
    degree: int
    indices: np.ndarray
    coefficients: np.ndarray
    penalty: float = 0.0
    cv_score: float = float("nan")
    train_rmse: float = float("nan")
    penalty_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    cv_errors: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def dim(self) -> int:
        return self.box.dim

    def standardize(self, xi):
        return 2.0 * self.box.to_unit(xi) - 1.0

    def predict(self, xi, chunk: int = 20_000) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.empty(xi.shape[0])
        for s in range(0, xi.shape[0], chunk):
            z = self.standardize(xi[s:s + chunk])
            out[s:s + chunk] = design_matrix(z, self.indices) @ self.coefficients
        return out

    __call__ = predict

    def to_dict(self) -> dict:
        return {"kind": "pce", "dim": self.dim, "degree": self.degree,
                "names": list(self.box.names), "lower": self.box.lower.tolist(),
                "upper": self.box.upper.tolist(), "indices": self.indices.tolist(),
                "coefficients": self.coefficients.tolist(), "penalty": self.penalty,
                "cv_score": self.cv_score, "train_rmse": self.train_rmse}

    @classmethod
    def from_dict(cls, d) -> "PCESurrogate":
        box = HyperparameterBox(np.array(d["lower"]), np.array(d["upper"]), tuple(d["names"]))
        return cls(box=box, degree=d["degree"], indices=np.array(d["indices"], dtype=int),
                   coefficients=np.array(d["coefficients"]), penalty=d["penalty"],
                   cv_score=d["cv_score"], train_rmse=d["train_rmse"])


def default_penalty_grid(Psi, y, n: int = 20) -> np.ndarray:
    """``n`` log-spaced penalties on ``[1e-6, 1] * ||Psi_c^T y_c||_inf``.

    ``Psi_c``, ``y_c`` are the non-constant columns and values after
    centring, since the constant coefficient is left unpenalized.
    """
    Pc = Psi[:, 1:] - Psi[:, 1:].mean(axis=0)
    lam_max = float(np.max(np.abs(Pc.T @ (y - y.mean())))) if Psi.shape[1] > 1 else 0.0
    if lam_max == 0.0:
        return np.zeros(1)
    return lam_max * np.logspace(-6, 0, n)


def l1_path(Psi, y, penalties) -> np.ndarray:
    """Coefficients minimizing ``0.5 ||y - Psi c||^2 + lam ||c[1:]||_1`` for each ``lam``.

    Column 0 of ``Psi`` must be the constant basis function; it is left
    unpenalized by centring. Uses the exact LARS-lasso homotopy, so the
    solutions satisfy the optimality conditions to round-off. Returns an
    array of shape ``(len(penalties), n_terms)``.
    """
    penalties = np.asarray(penalties, dtype=float)
    n = Psi.shape[0]
    ybar = y.mean()
    if Psi.shape[1] == 1:
        return np.tile([ybar], (penalties.size, 1))
    X = Psi[:, 1:]
    xbar = X.mean(axis=0)
    Xc = X - xbar
    yc = y - ybar
    out = np.zeros((penalties.size, Psi.shape[1]))
    pos = penalties > 0
    if np.any(~pos):
        rank = np.linalg.matrix_rank(Psi)
        if rank < Psi.shape[1]:
            raise np.linalg.LinAlgError(
                f"design matrix has rank {rank} < {Psi.shape[1]} basis terms; "
                "use a positive l1 penalty")
        out[~pos] = np.linalg.lstsq(Psi, y, rcond=None)[0]
    if np.any(pos):
        alphas = penalties[pos] / n
        use_gram = n > Xc.shape[1]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            path_alphas, _, coefs = lars_path(
                Xc, yc, Gram=Xc.T @ Xc if use_gram else None,
                Xy=Xc.T @ yc if use_gram else None,
                method="lasso", alpha_min=float(alphas.min()), max_iter=100_000)
        # the lasso solution is piecewise linear in the penalty
        pa = path_alphas[::-1]
        cf = coefs[:, ::-1]
        beta = np.empty((alphas.size, Xc.shape[1]))
        for j in range(Xc.shape[1]):
            beta[:, j] = np.interp(alphas, pa, cf[j])
        out[pos, 1:] = beta
        out[pos, 0] = ybar - beta @ xbar
    return out


def fit_pce(design, values, box: HyperparameterBox, degree: int = 5, cv_folds: int = 10,
            penalty_grid=None, seed=0) -> PCESurrogate:
    """Sparse-regression PCE with cross-validated l1 penalty.

    Parameters
    ----------
    design : (N, n) array
        Points inside ``box``.
    values : (N,) array
        Function values at the design points.
    degree : int
        Total-degree truncation.
    penalty_grid : sequence of float, optional
        Candidate penalties ``lam`` for ``0.5||y - Psi c||^2 + lam||c||_1``;
        the default is :func:`default_penalty_grid`.
    """
    X = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("design and values must have equal length")
    if X.shape[0] < 2 * box.dim:
        raise DesignTooSmallError(f"need at least {2 * box.dim} design points, got {X.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    box.check(X)
    idx = total_degree_indices(box.dim, degree)
    Psi = design_matrix(2.0 * box.to_unit(X) - 1.0, idx)
    grid = default_penalty_grid(Psi, y) if penalty_grid is None else np.asarray(penalty_grid, float)
    grid = np.sort(grid)[::-1]

    if grid.size == 1 or cv_folds < 2:
        best = float(grid[0])
        cv_err = np.full(grid.size, np.nan)
    else:
        folds = KFold(n_splits=min(cv_folds, X.shape[0]), shuffle=True, random_state=seed)
        cv_err = np.zeros(grid.size)
        for tr, va in folds.split(X):
            # scale to the fold size so the penalty per sample is unchanged
            coefs = l1_path(Psi[tr], y[tr], grid * tr.size / X.shape[0])
            cv_err += np.sum((coefs @ Psi[va].T - y[va]) ** 2, axis=1)
        cv_err = np.sqrt(cv_err / X.shape[0])
        best = float(grid[int(np.argmin(cv_err))])

    coef = l1_path(Psi, y, [best])[0]
    rmse = float(np.sqrt(np.mean((Psi @ coef - y) ** 2)))
    return PCESurrogate(box=box, degree=degree, indices=idx, coefficients=coef, penalty=best,
                        cv_score=float(np.nanmin(cv_err)) if np.any(np.isfinite(cv_err)) else float("nan"),
                        train_rmse=rmse, penalty_grid=grid, cv_errors=cv_err)


def pce_sobol(surrogate: PCESurrogate, provenance=None) -> SobolIndexReport:
    """First-order and total indices from squared PCE coefficients."""
    idx = surrogate.indices
    c2 = surrogate.coefficients ** 2
    nonconst = idx.sum(axis=1) > 0
    var = float(c2[nonconst].sum())
    names = surrogate.box.names
    prov = {"degree": surrogate.degree, "penalty": surrogate.penalty, **(provenance or {})}
    # round-off coefficients of a constant fit are not variance
    if var <= 1e-14 * float(c2.sum()):
        return SobolIndexReport.constant_function(names, "pce", prov)
    active = idx > 0
    only = active & (active.sum(axis=1) == 1)[:, None]
    S = (c2 @ only) / var
    T = (c2 @ active) / var
    return SobolIndexReport(names, S, T, var, "pce", False, prov)
