"""
SEIR epidemic benchmark: ODE model, synthetic data, R0 quantity of interest.

The integrator is an adaptive Dormand-Prince 5(4) scheme compiled with
numba; stepping is clipped so that every requested output time is hit
exactly, which avoids interpolation error at the observation times.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numba
import numpy as np

from ..exceptions import EvaluationError
from ..io import read_numeric_csv
from ..problem import (ForwardModel, GaussianNoiseModel, GaussianPrior, GaussianPriorFamily,
                       HyperparameterBox, InverseProblem)

POPULATION = 1000.0
INITIAL_STATE = np.array([999.0, 0.0, 1.0, 0.0])
# mu, beta, sigma, gamma
NOMINAL_RATES = np.array([5.48e-5, 1 / 2.5, 1 / 3, 1 / 7])
NOMINAL_THETA = np.log(NOMINAL_RATES)
OBS_TIMES = 3.0 * np.arange(1, 16) + 30.0
NOISE_STD = 30.0

THETA_NAMES = ("log_mu", "log_beta", "log_sigma", "log_gamma")
XI_NAMES = ("m_log_mu", "m_log_beta", "m_log_sigma", "m_log_gamma",
            "s2_log_mu", "s2_log_beta", "s2_log_sigma", "s2_log_gamma")
XI_LOWER = np.array([-15.0, -2.25, -2.25, -2.25, 0.5, 0.5, 0.5, 0.5])
XI_UPPER = np.array([-5.0, -0.75, -0.75, -0.75, 1.5, 1.5, 1.5, 1.5])
XI_NOMINAL = np.array([-10.0, -1.5, -1.5, -1.5, 1.0, 1.0, 1.0, 1.0])

IS_PRIOR = GaussianPrior(mean=np.array([-10.0, -1.5, -1.5, -1.5]),
                         var=np.array([3.0, 2.0, 2.0, 2.0]) ** 2)

DATA_SEED = 20230917


@dataclass(frozen=True)
class ODEIntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 100_000
    method: str = "dopri5"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.method != "dopri5":
            raise ValueError(f"unsupported integration method {self.method!r}")


@numba.njit(cache=True, nogil=True)
def _rhs(y, mu, beta, sigma, gamma, n_pop, out):
    S, E, I, R = y[0], y[1], y[2], y[3]
    inf = beta * S * I / n_pop
    out[0] = mu * n_pop - inf - mu * S
    out[1] = inf - (sigma + mu) * E
    out[2] = sigma * E - (gamma + mu) * I
    out[3] = gamma * I - mu * R


@numba.njit(cache=True, nogil=True)
def _dopri5(y0, rates, n_pop, times, rtol, atol, max_steps):
    # Dormand-Prince tableau
    a21 = 1 / 5
    a31, a32 = 3 / 40, 9 / 40
    a41, a42, a43 = 44 / 45, -56 / 15, 32 / 9
    a51, a52, a53, a54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
    a61, a62, a63, a64, a65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
    b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
    e1, e3, e4, e5, e6, e7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                              22 / 525, -1 / 40)
    mu, beta, sigma, gamma = rates[0], rates[1], rates[2], rates[3]
    n = y0.size
    out = np.empty((times.size, n))
    y = y0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    t = 0.0
    h = 1e-3
    steps = 0
    _rhs(y, mu, beta, sigma, gamma, n_pop, k1)
    for j in range(times.size):
        tend = times[j]
        while t < tend:
            if steps >= max_steps:
                return out, 1
            last = False
            h_free = h
            if t + h >= tend:
                h = tend - t
                last = True
            for i in range(n):
                tmp[i] = y[i] + h * a21 * k1[i]
            _rhs(tmp, mu, beta, sigma, gamma, n_pop, k2)
            for i in range(n):
                tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i])
            _rhs(tmp, mu, beta, sigma, gamma, n_pop, k3)
            for i in range(n):
                tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i])
            _rhs(tmp, mu, beta, sigma, gamma, n_pop, k4)
            for i in range(n):
                tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i])
            _rhs(tmp, mu, beta, sigma, gamma, n_pop, k5)
            for i in range(n):
                tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i]
                                     + a65 * k5[i])
            _rhs(tmp, mu, beta, sigma, gamma, n_pop, k6)
            for i in range(n):
                ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i]
                                      + b6 * k6[i])
            _rhs(ynew, mu, beta, sigma, gamma, n_pop, k7)
            err = 0.0
            for i in range(n):
                ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i]
                          + e7 * k7[i])
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                err += (ei / sc) ** 2
            err = np.sqrt(err / n)
            steps += 1
            if not np.isfinite(err):
                return out, 2
            if err <= 1.0:
                t = tend if last else t + h
                for i in range(n):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
                # a clipped step says nothing about the natural step size
                h = h_free if last else h * fac
            else:
                h = h * max(0.2, 0.9 * err ** -0.2)
                if h < 1e-14:
                    return out, 3
        for i in range(n):
            out[j, i] = y[i]
    return out, 0


def integrate_seir_states(theta, times, config: ODEIntegratorConfig = ODEIntegratorConfig(),
                          y0=INITIAL_STATE, population=POPULATION) -> np.ndarray:
    """Full state ``(S, E, I, R)`` at each of ``times`` for log-rates ``theta``."""
    theta = np.asarray(theta, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ValueError("times must be non-negative and increasing")
    rates = np.exp(theta)
    if not np.all(np.isfinite(rates)):
        raise EvaluationError(f"non-finite rates at theta={theta.tolist()}", theta=theta)
    states, status = _dopri5(np.asarray(y0, dtype=float), rates, float(population), times,
                             config.rtol, config.atol, config.max_steps)
    if status != 0:
        reason = {1: "step count exhausted", 2: "non-finite error estimate",
                  3: "step size underflow"}[status]
        raise EvaluationError(f"SEIR integration failed ({reason}) at theta={theta.tolist()}",
                              theta=theta)
    return states


def integrate_seir(theta, times=OBS_TIMES, config: ODEIntegratorConfig = ODEIntegratorConfig()):
    """Infected compartment ``I(t)`` at ``times`` for log-rates ``theta``."""
    return integrate_seir_states(theta, times, config)[:, 2]


def r0_qoi(theta) -> float:
    """Basic reproduction number ``beta/(gamma+mu) * sigma/(sigma+mu)``.

    Accepts stacked ``theta`` along leading axes.
    """
    theta = np.asarray(theta, dtype=float)
    lm, lb, ls, lg = (theta[..., i] for i in range(4))
    # ratios written in log space to stay finite for extreme log-rates
    out = np.exp(lb - np.logaddexp(lg, lm) + ls - np.logaddexp(ls, lm))
    return out if out.ndim else float(out)


def simulate_seir_data(seed=DATA_SEED, config: ODEIntegratorConfig = ODEIntegratorConfig(),
                       noise_std=NOISE_STD, noiseless=False) -> np.ndarray:
    """Noisy ``I`` observations at the 15 observation times; rows ``(t, I)``."""
    clean = integrate_seir(NOMINAL_THETA, OBS_TIMES, config)
    noise = 0.0 if noiseless else np.random.default_rng(seed).normal(0.0, noise_std, OBS_TIMES.size)
    return np.column_stack([OBS_TIMES, clean + noise])


def load_seir_data() -> np.ndarray:
    """The committed dataset (seed ``DATA_SEED``) as rows ``(t, I)``."""
    path = resources.files("priorgsa.benchmarks") / "data" / "seir_data.csv"
    with resources.as_file(path) as p:
        return read_numeric_csv(p)[2]


def seir_box() -> HyperparameterBox:
    return HyperparameterBox(XI_LOWER, XI_UPPER, XI_NAMES)


def seir_prior_family(box=None) -> GaussianPriorFamily:
    return GaussianPriorFamily(box or seir_box(), mean_index=[0, 1, 2, 3], var_index=[4, 5, 6, 7])


def seir_problem(data=None, config: ODEIntegratorConfig = ODEIntegratorConfig(),
                 box=None) -> InverseProblem:
    """SEIR inverse problem for the log-rates from noisy infected counts.

    Defaults to the committed dataset.
    """
    if data is None:
        data = load_seir_data()
    data = np.asarray(data, dtype=float)
    times, values = data[:, 0], data[:, 1]
    forward = ForwardModel(4, times.size, lambda th: integrate_seir(th, times, config))
    noise = GaussianNoiseModel.iid(values, NOISE_STD)
    return InverseProblem(forward=forward, noise=noise, prior_family=seir_prior_family(box),
                          qoi=r0_qoi, name="seir", theta_names=THETA_NAMES,
                          nominal_xi=XI_NOMINAL.copy(),
                          metadata={"population": POPULATION, "noise_std": NOISE_STD})
