"""
Bayesian inverse problem building blocks.

A problem couples a deterministic forward model, a Gaussian noise model with
observed data, a family of diagonal Gaussian priors indexed by a
hyperparameter vector ``xi``, and a scalar quantity of interest (QoI).
Densities are always handled in log space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .exceptions import DomainError, EvaluationError

LOG_2PI = np.log(2.0 * np.pi)


class ForwardModel:
    """Deterministic parameter-to-observable map ``theta -> B y(theta)``.

    Parameters
    ----------
    n_theta, n_obs : int
        Parameter and observation dimensions.
    func : callable
        Maps a 1-D array of length ``n_theta`` to predicted observations.
    matrix : array_like, optional
        If the map is linear, its ``(n_obs, n_theta)`` matrix. Enables the
        closed-form MAP shortcut.
    """

    def __init__(self, n_theta: int, n_obs: int, func: Callable, matrix=None):
        if n_theta < 1 or n_obs < 1:
            raise ValueError("dimensions must be positive")
        self.n_theta = int(n_theta)
        self.n_obs = int(n_obs)
        self.func = func
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        if self.matrix is not None and self.matrix.shape != (n_obs, n_theta):
            raise ValueError("matrix shape does not match declared dimensions")

    @classmethod
    def linear(cls, matrix) -> "ForwardModel":
        A = np.asarray(matrix, dtype=float)
        return cls(A.shape[1], A.shape[0], lambda theta: A @ theta, matrix=A)

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ValueError(f"theta must have shape ({self.n_theta},), got {theta.shape}")
        try:
            out = np.asarray(self.func(theta), dtype=float)
        except EvaluationError:
            raise
        except Exception as exc:  # solver blow-ups etc.
            raise EvaluationError(f"forward model failed at theta={theta.tolist()}: {exc}",
                                  theta=theta) from exc
        if out.shape != (self.n_obs,):
            raise EvaluationError(
                f"forward model returned shape {out.shape}, expected ({self.n_obs},)", theta=theta)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite model output at theta={theta.tolist()}", theta=theta)
        return out


class GaussianNoiseModel:
    """Observed data ``d`` and SPD noise covariance ``Gamma_noise``."""

    def __init__(self, data, covariance):
        self.data = np.asarray(data, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape != (self.data.size, self.data.size):
            raise ValueError("noise covariance must be square with the data dimension")
        if not np.allclose(cov, cov.T):
            raise ValueError("noise covariance must be symmetric")
        try:
            self._chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise covariance is not positive definite") from exc
        self.covariance = cov

    @classmethod
    def iid(cls, data, std: float) -> "GaussianNoiseModel":
        d = np.asarray(data, dtype=float).ravel()
        return cls(d, (std ** 2) * np.eye(d.size))

    def whiten(self, r) -> np.ndarray:
        """Return ``L^{-1} r`` with ``Gamma_noise = L L^T``."""
        L = self._chol[0]
        return solve_triangular(L, r, lower=True)

    def precision_times(self, r) -> np.ndarray:
        return cho_solve(self._chol, r)

    @property
    def precision(self) -> np.ndarray:
        return cho_solve(self._chol, np.eye(self.data.size))


@dataclass(frozen=True)
class HyperparameterBox:
    """Independent uniform ranges ``[lower_j, upper_j]`` for each hyperparameter."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        bad = [j for j in range(lo.size) if not lo[j] < hi[j]]
        if bad:
            labels = [self._label(j, self.names) for j in bad]
            raise DomainError("box requires lower < upper; violated for " + ", ".join(labels))
        names = tuple(self.names) if self.names else tuple(f"xi{j + 1}" for j in range(lo.size))
        if len(names) != lo.size:
            raise ValueError("one name per hyperparameter required")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "names", names)

    @staticmethod
    def _label(j, names):
        return f"{names[j]} (index {j})" if names else f"index {j}"

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, xi, atol: float = 0.0) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(np.all(xi >= self.lower - atol) and np.all(xi <= self.upper + atol))

    def check(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dim:
            raise DomainError(f"hyperparameter vector must have length {self.dim}")
        outside = (xi < self.lower) | (xi > self.upper)
        if np.any(outside):
            cols = sorted(set(np.nonzero(outside)[-1].tolist()))
            raise DomainError("hyperparameters outside the box: "
                              + ", ".join(self.names[j] for j in cols))
        return xi

    def from_unit(self, u) -> np.ndarray:
        """Affine map from ``[0, 1]^n`` into the box."""
        return self.lower + np.asarray(u, dtype=float) * self.width

    def to_unit(self, xi) -> np.ndarray:
        return (np.asarray(xi, dtype=float) - self.lower) / self.width


@dataclass(frozen=True)
class GaussianPrior:
    """Diagonal Gaussian ``N(mean, diag(var))``."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        v = np.atleast_1d(np.asarray(self.var, dtype=float))
        if m.shape != v.shape:
            raise ValueError("mean and variance must have equal length")
        if np.any(~(v > 0)):
            raise DomainError("prior variances must be strictly positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "var", v)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def log_norm(self) -> float:
        """Log normalization constant ``-0.5 * sum(log(2 pi var))``."""
        return -0.5 * float(np.sum(LOG_2PI + np.log(self.var)))

    def logpdf(self, theta):
        """Exact log-density; ``theta`` may be stacked along leading axes."""
        theta = np.asarray(theta, dtype=float)
        z2 = (theta - self.mean) ** 2 / self.var
        return self.log_norm - 0.5 * np.sum(z2, axis=-1)


class GaussianPriorFamily:
    """Diagonal Gaussian priors wired to hyperparameters by explicit index maps.

    ``mean_index[i]`` names the entry of ``xi`` used as the prior mean of
    ``theta_i`` (``None`` means the fixed value ``fixed_mean[i]``); likewise
    ``var_index`` for variances.
    """

    def __init__(self, box: HyperparameterBox, mean_index: Sequence[Optional[int]],
                 var_index: Sequence[Optional[int]], fixed_mean=None, fixed_var=None):
        self.box = box
        self.mean_index = tuple(None if i is None else int(i) for i in mean_index)
        self.var_index = tuple(None if i is None else int(i) for i in var_index)
        if len(self.mean_index) != len(self.var_index):
            raise ValueError("mean_index and var_index must have equal length")
        self.n_theta = len(self.mean_index)
        self.fixed_mean = np.zeros(self.n_theta) if fixed_mean is None else np.asarray(fixed_mean, float)
        self.fixed_var = np.ones(self.n_theta) if fixed_var is None else np.asarray(fixed_var, float)
        for idx in self.mean_index + self.var_index:
            if idx is not None and not 0 <= idx < box.dim:
                raise ValueError(f"slot index {idx} outside hyperparameter dimension {box.dim}")
        for i, idx in enumerate(self.var_index):
            if idx is None and not self.fixed_var[i] > 0:
                raise DomainError("fixed prior variances must be positive")
            if idx is not None and not box.lower[idx] > 0:
                raise DomainError(f"variance hyperparameter {box.names[idx]} must have a positive lower bound")

    def _moments(self, xi):
        m = self.fixed_mean.copy()
        v = self.fixed_var.copy()
        for i, idx in enumerate(self.mean_index):
            if idx is not None:
                m[i] = xi[idx]
        for i, idx in enumerate(self.var_index):
            if idx is not None:
                v[i] = xi[idx]
        return m, v

    def prior(self, xi) -> GaussianPrior:
        xi = self.box.check(xi)
        m, v = self._moments(xi)
        return GaussianPrior(m, v)

    def moments_batch(self, xis):
        """Prior means and variances for a ``(N, n)`` stack of hyperparameters."""
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        self.box.check(xis)
        N = xis.shape[0]
        m = np.tile(self.fixed_mean, (N, 1))
        v = np.tile(self.fixed_var, (N, 1))
        for i, idx in enumerate(self.mean_index):
            if idx is not None:
                m[:, i] = xis[:, idx]
        for i, idx in enumerate(self.var_index):
            if idx is not None:
                v[:, i] = xis[:, idx]
        return m, v


@dataclass
class InverseProblem:
    """Forward model, noise model, prior family and QoI bundled together."""

    forward: ForwardModel
    noise: GaussianNoiseModel
    prior_family: GaussianPriorFamily
    qoi: Callable
    name: str = "problem"
    theta_names: tuple = ()
    nominal_xi: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise.data.size != self.forward.n_obs:
            raise ValueError("data dimension does not match the forward model")
        if self.prior_family.n_theta != self.forward.n_theta:
            raise ValueError("prior family dimension does not match the forward model")
        if not self.theta_names:
            self.theta_names = tuple(f"theta{i + 1}" for i in range(self.forward.n_theta))

    @property
    def box(self) -> HyperparameterBox:
        return self.prior_family.box

    def log_likelihood(self, theta) -> float:
        return log_likelihood(self.forward, self.noise, theta)

    def log_prior(self, xi, theta) -> float:
        return log_prior(self.prior_family, xi, theta)

    def log_posterior(self, xi, theta) -> float:
        return log_posterior_unnormalized(self, xi, theta)

    def log_posterior_with(self, prior: GaussianPrior):
        """Unnormalized log-posterior for an arbitrary Gaussian prior."""
        def target(theta):
            return log_likelihood(self.forward, self.noise, theta) + float(prior.logpdf(theta))
        return target


def log_likelihood(model: ForwardModel, noise: GaussianNoiseModel, theta) -> float:
    """Gaussian log-likelihood ``-0.5 r^T Gamma^{-1} r`` with ``r = B y(theta) - d``.

    Additive constants are dropped.
    """
    r = model(theta) - noise.data
    z = noise.whiten(r)
    return -0.5 * float(z @ z)


def log_prior(family: GaussianPriorFamily, xi, theta) -> float:
    """Exact normalized log-density of ``N(theta_xi, Gamma_xi)`` at ``theta``."""
    return float(family.prior(xi).logpdf(theta))


def log_posterior_unnormalized(problem: InverseProblem, xi, theta) -> float:
    return (log_likelihood(problem.forward, problem.noise, theta)
            + log_prior(problem.prior_family, xi, theta))
