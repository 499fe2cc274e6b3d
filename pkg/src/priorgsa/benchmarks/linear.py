"""
Linear-Gaussian line-fit benchmark with closed-form posterior and HS maps.

Fit ``y = m t + b`` to four noisy points; ``theta = (b, m)`` and
``xi = (mu_b, mu_m, sigma_b^2, sigma_m^2)``. The QoI is ``theta^T theta``.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from ..io import read_numeric_csv
from ..problem import (ForwardModel, GaussianNoiseModel, GaussianPrior, GaussianPriorFamily,
                       HyperparameterBox, InverseProblem)

TIMES = np.array([0.0, 0.5, 1.5, 2.5])
THETA_TRUE = np.array([1.0, -2.0])
FORWARD_MATRIX = np.column_stack([np.ones_like(TIMES), TIMES])
XI_NAMES = ("mu_b", "mu_m", "sigma2_b", "sigma2_m")
XI_NOMINAL = np.ones(4)
IS_PRIOR = GaussianPrior(mean=np.array([1.0, 1.0]), var=np.array([1.5, 1.5]) ** 2)

# seed of the committed dataset in data/linear_data.csv
DATA_SEED = 20230917


def quadratic_qoi(theta):
    """``q(theta) = theta^T theta``; accepts stacked ``theta``."""
    theta = np.asarray(theta, dtype=float)
    out = np.sum(theta * theta, axis=-1)
    return out if np.ndim(out) else float(out)


def simulate_linear_data(seed=DATA_SEED, noiseless=False) -> np.ndarray:
    """``d_i = -2 t_i + 1 + eta_i`` with ``eta_i ~ N(0, 1)``."""
    clean = FORWARD_MATRIX @ THETA_TRUE
    if noiseless:
        return clean
    return clean + np.random.default_rng(seed).standard_normal(TIMES.size)


def load_linear_data() -> np.ndarray:
    """The committed dataset as an array of rows ``(t, value)``."""
    path = resources.files("priorgsa.benchmarks") / "data" / "linear_data.csv"
    with resources.as_file(path) as p:
        return read_numeric_csv(p)[2]


def linear_box(half_width=0.5) -> HyperparameterBox:
    return HyperparameterBox(XI_NOMINAL * (1 - half_width), XI_NOMINAL * (1 + half_width), XI_NAMES)


def linear_problem(data=None, box=None) -> InverseProblem:
    """Line-fit problem; defaults to the committed dataset and the +-50% box."""
    if data is None:
        data = load_linear_data()[:, 1]
    box = box or linear_box()
    family = GaussianPriorFamily(box, mean_index=[0, 1], var_index=[2, 3])
    return InverseProblem(forward=ForwardModel.linear(FORWARD_MATRIX),
                          noise=GaussianNoiseModel(np.asarray(data, float), np.eye(TIMES.size)),
                          prior_family=family, qoi=quadratic_qoi, name="linear",
                          theta_names=("b", "m"), nominal_xi=XI_NOMINAL.copy())


def posterior_from_prior(problem: InverseProblem, prior: GaussianPrior):
    """Gaussian posterior moments for a linear forward model and Gaussian prior."""
    A = problem.forward.matrix
    P = problem.noise.precision
    prec = A.T @ P @ A + np.diag(1.0 / prior.var)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    rhs = A.T @ P @ problem.noise.data + prior.mean / prior.var
    mean = np.linalg.solve(prec, rhs)
    return mean, cov


def linear_analytic_posterior(problem: InverseProblem, xi):
    """Posterior mean and covariance for hyperparameters ``xi``."""
    return posterior_from_prior(problem, problem.prior_family.prior(xi))


def quadratic_moments(mean, cov):
    """Mean and variance of ``theta^T theta`` for ``theta ~ N(mean, cov)``."""
    mean = np.asarray(mean, float)
    cov = np.asarray(cov, float)
    m = float(mean @ mean + np.trace(cov))
    v = float(2.0 * np.trace(cov @ cov) + 4.0 * mean @ cov @ mean)
    return m, v


def linear_analytic_hs_maps(problem: InverseProblem, xi):
    """Exact ``(F_mean, F_var)`` at ``xi``.

    ``F_mean`` includes the ``tr(Gamma_post)`` term of the Gaussian
    quadratic-form identity.
    """
    return quadratic_moments(*linear_analytic_posterior(problem, xi))


def analytic_map_functions(problem: InverseProblem):
    """Vectorized ``xi -> F_mean`` and ``xi -> F_var`` closures over a stack of ``xi``."""
    A = problem.forward.matrix
    P = problem.noise.precision
    H = A.T @ P @ A
    g = A.T @ P @ problem.noise.data
    family = problem.prior_family

    def moments(xis):
        xis = np.atleast_2d(xis)
        m, v = family.moments_batch(xis)
        prec = H[None, :, :] + np.einsum("ni,ij->nij", 1.0 / v, np.eye(H.shape[0]))
        cov = np.linalg.inv(prec)
        mean = np.einsum("nij,nj->ni", cov, g[None, :] + m / v)
        return mean, cov

    def f_mean(xis):
        mean, cov = moments(xis)
        return np.einsum("ni,ni->n", mean, mean) + np.trace(cov, axis1=1, axis2=2)

    def f_var(xis):
        mean, cov = moments(xis)
        cc = np.einsum("nij,nji->n", cov, cov)
        return 2.0 * cc + 4.0 * np.einsum("ni,nij,nj->n", mean, cov, mean)

    return f_mean, f_var
