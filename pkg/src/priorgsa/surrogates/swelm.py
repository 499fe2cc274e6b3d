"""
Sparse-weight extreme learning machine (SW-ELM) surrogates.

A single hidden layer with random, sparsified input weights and an
exponential activation::

    F(x) = beta_0 + sum_j beta_j exp(w_j . z(x) + b_j),   z(x) in [-1, 1]^n

Only the output weights are trained (ridge-regularized least squares).
Because each hidden unit factorizes over inputs, every conditional
expectation reduces to products of one-dimensional integrals
``E[exp(w z)] = sinh(w) / w`` under the uniform measure, which gives the
Sobol' indices in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve

from ..exceptions import DesignTooSmallError
from ..problem import HyperparameterBox
from .report import SobolIndexReport

P_GRID = (0.25, 0.5, 0.75, 1.0)
RIDGE = 1e-10


@dataclass
class SWELMSurrogate:
    box: HyperparameterBox
    W: np.ndarray          # (width, n) sparsified hidden weights
    b: np.ndarray          # (width,)
    beta: np.ndarray       # (width,)
    beta0: float
    p: float
    activation: str = "exp"
    validation_rmse: float = float("nan")
    train_rmse: float = float("nan")
    p_scores: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.W.shape[0]

    def standardize(self, xi):
        return 2.0 * self.box.to_unit(xi) - 1.0

    def hidden(self, xi) -> np.ndarray:
        z = self.standardize(np.atleast_2d(np.asarray(xi, dtype=float)))
        return np.exp(z @ self.W.T + self.b)

    def predict(self, xi, chunk: int = 20_000) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.empty(xi.shape[0])
        for s in range(0, xi.shape[0], chunk):
            out[s:s + chunk] = self.beta0 + self.hidden(xi[s:s + chunk]) @ self.beta
        return out

    __call__ = predict

    def to_dict(self) -> dict:
        return {"kind": "swelm", "dim": self.box.dim, "width": self.width,
                "names": list(self.box.names), "lower": self.box.lower.tolist(),
                "upper": self.box.upper.tolist(), "W": self.W.tolist(), "b": self.b.tolist(),
                "beta": self.beta.tolist(), "beta0": self.beta0, "p": self.p,
                "activation": self.activation, "validation_rmse": self.validation_rmse,
                "train_rmse": self.train_rmse,
                "p_scores": {str(k): v for k, v in self.p_scores.items()}}

    @classmethod
    def from_dict(cls, d) -> "SWELMSurrogate":
        box = HyperparameterBox(np.array(d["lower"]), np.array(d["upper"]), tuple(d["names"]))
        return cls(box=box, W=np.array(d["W"]).reshape(-1, d["dim"]), b=np.array(d["b"]),
                   beta=np.array(d["beta"]), beta0=d["beta0"], p=d["p"],
                   activation=d["activation"], validation_rmse=d["validation_rmse"],
                   train_rmse=d["train_rmse"],
                   p_scores={float(k): v for k, v in d.get("p_scores", {}).items()})


def sparsify(W, p: float) -> np.ndarray:
    """Keep the ``max(1, round(p n))`` largest-magnitude weights in each row."""
    n = W.shape[1]
    keep = max(1, int(round(p * n)))
    if keep >= n:
        return W.copy()
    out = np.zeros_like(W)
    top = np.argsort(-np.abs(W), axis=1, kind="stable")[:, :keep]
    rows = np.arange(W.shape[0])[:, None]
    out[rows, top] = W[rows, top]
    return out


def _solve_output(H, y):
    """Ridge least squares with a trace-scaled regularizer; returns ``(beta0, beta)``."""
    ybar = y.mean()
    hbar = H.mean(axis=0)
    Hc = H - hbar
    G = Hc.T @ Hc
    lam = RIDGE * np.trace(G) / G.shape[0] if G.size else 0.0
    if lam == 0.0:
        return float(ybar), np.zeros(H.shape[1])
    beta = solve(G + lam * np.eye(G.shape[0]), Hc.T @ (y - ybar), assume_a="pos")
    return float(ybar - hbar @ beta), beta


def fit_swelm(design, values, box: HyperparameterBox, validation_fraction: float = 0.2,
              p_grid=P_GRID, seed=0, width=None, weight_scale=None) -> SWELMSurrogate:
    """Fit an SW-ELM, choosing the sparsity fraction ``p`` on a validation split.

    Hidden width defaults to half the training-set size. Hidden weights are
    ``weight_scale * N(0, 1)`` (default scale ``1/sqrt(n)``) and biases
    ``U[-1, 1]``, drawn once per seed and then sparsified for each
    candidate ``p``.
    """
    X = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("design and values must have equal length")
    if X.shape[0] < 10:
        raise DesignTooSmallError(f"SW-ELM needs at least 10 design points, got {X.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    box.check(X)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(X.shape[0])
    n_val = max(1, int(round(validation_fraction * X.shape[0])))
    va, tr = perm[:n_val], perm[n_val:]
    width = width or max(1, tr.size // 2)
    if weight_scale is None:
        weight_scale = 1.0 / np.sqrt(box.dim)
    W_full = weight_scale * rng.standard_normal((width, box.dim))
    b = rng.uniform(-1.0, 1.0, width)
    Z = 2.0 * box.to_unit(X) - 1.0

    scores = {}
    best = None
    for p in p_grid:
        W = sparsify(W_full, p)
        H = np.exp(Z @ W.T + b)
        beta0, beta = _solve_output(H[tr], y[tr])
        rmse = float(np.sqrt(np.mean((beta0 + H[va] @ beta - y[va]) ** 2)))
        scores[float(p)] = rmse
        if best is None or rmse < best[0]:
            best = (rmse, float(p), W, beta0, beta, H)
    rmse, p, W, beta0, beta, H = best
    train_rmse = float(np.sqrt(np.mean((beta0 + H[tr] @ beta - y[tr]) ** 2)))
    return SWELMSurrogate(box=box, W=W, b=b, beta=beta, beta0=beta0, p=p,
                          validation_rmse=rmse, train_rmse=train_rmse, p_scores=scores)


def _exp_mean(w):
    """``E[exp(w z)]`` for ``z ~ U[-1, 1]``, elementwise."""
    w = np.asarray(w, dtype=float)
    out = np.ones_like(w)
    nz = np.abs(w) > 1e-8
    out[nz] = np.sinh(w[nz]) / w[nz]
    # series for tiny |w|: 1 + w^2/6
    out[~nz] = 1.0 + w[~nz] ** 2 / 6.0
    return out


def swelm_sobol(surrogate: SWELMSurrogate, provenance=None) -> SobolIndexReport:
    """Closed-form first-order and total Sobol' indices of an SW-ELM.

    With ``c_j = beta_j exp(b_j)`` and ``m_jk = E[exp(W_jk z)]``::

        V_k     = sum_jl c_j c_l prod_{i!=k} m_ji m_li (m2_jlk - m_jk m_lk)
        V_tot_k = sum_jl c_j c_l prod_{i!=k} m2_jli (m2_jlk - m_jk m_lk)

    where ``m2_jli = E[exp((W_ji + W_li) z)]``.
    """
    names = surrogate.box.names
    prov = {"width": surrogate.width, "p": surrogate.p, **(provenance or {})}
    if surrogate.activation != "exp":
        raise ValueError("closed-form indices require the exponential activation")
    W = surrogate.W
    c = surrogate.beta * np.exp(surrogate.b)
    if not np.any(c):
        return SobolIndexReport.constant_function(names, "swelm", prov)
    n = W.shape[1]
    m = _exp_mean(W)                                    # (J, n)
    m2 = _exp_mean(W[:, None, :] + W[None, :, :])       # (J, J, n)
    cov = m2 - m[:, None, :] * m[None, :, :]            # (J, J, n)
    cc = np.outer(c, c)
    prod_m2 = np.prod(m2, axis=2)
    prod_mm = np.prod(m, axis=1)
    var = float(np.sum(cc * (prod_m2 - np.outer(prod_mm, prod_mm))))
    scale = float(np.sum(np.abs(cc) * prod_m2))
    if var <= 1e-13 * scale or var <= 0.0:
        return SobolIndexReport.constant_function(names, "swelm", prov)
    S = np.empty(n)
    T = np.empty(n)
    for k in range(n):
        others = [i for i in range(n) if i != k]
        pm = np.prod(m[:, others], axis=1)
        S[k] = np.sum(cc * np.outer(pm, pm) * cov[:, :, k]) / var
        T[k] = np.sum(cc * np.prod(m2[:, :, others], axis=2) * cov[:, :, k]) / var
    return SobolIndexReport(names, S, T, var, "swelm", False, prov)
