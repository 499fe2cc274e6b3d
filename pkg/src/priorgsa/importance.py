"""
Reweighting one posterior sample set to other prior hyperparameters.

Draws come from the posterior built with a wide "covering" prior
``pi_IS``. Moments under the prior selected by ``xi`` are then
self-normalized importance sampling estimates whose weights need only the
prior ratio ``pi_xi / pi_IS``; the likelihood and both posterior
normalization constants cancel.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DegenerateWeightsError
from .io import write_csv
from .problem import GaussianPrior, GaussianPriorFamily
from .sampling import MCMCChain


@dataclass(frozen=True)
class PosteriorSampleSet:
    """Distinct chain states with multiplicities and cached per-state values.

    ``order`` lists, in chain order, the distinct-state id of each of the
    ``M`` draws, so chain prefixes and batch statistics stay available.
    """

    theta: np.ndarray
    multiplicity: np.ndarray
    q: np.ndarray
    log_is_prior: np.ndarray
    is_prior: GaussianPrior
    order: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.multiplicity < 1):
            raise ValueError("multiplicities must be positive")
        if int(self.multiplicity.sum()) != self.order.size:
            raise ValueError("multiplicities must sum to the chain length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.log_is_prior))):
            raise ValueError("cached QoI and prior values must be finite")

    @classmethod
    def from_chain(cls, chain: MCMCChain, qoi: Callable, is_prior: GaussianPrior,
                   vectorized: bool = False) -> "PosteriorSampleSet":
        """Evaluate ``qoi`` and the IS prior once per distinct state."""
        ids = chain.distinct_ids()
        starts = np.concatenate([[0], np.nonzero(np.diff(ids))[0] + 1])
        theta = chain.samples[starts]
        return cls.from_draws(theta, ids, qoi, is_prior, vectorized,
                              provenance={"seed": chain.seed, "M": len(chain),
                                          "M_burn": chain.burn_in,
                                          "config_hash": chain.config_hash})

    @classmethod
    def from_draws(cls, theta, order, qoi, is_prior, vectorized=False, provenance=None):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        order = np.asarray(order, dtype=np.int64)
        mult = np.bincount(order, minlength=theta.shape[0])
        if vectorized:
            q = np.asarray(qoi(theta), dtype=float)
        else:
            q = np.array([qoi(t) for t in theta], dtype=float)
        return cls(theta=theta, multiplicity=mult, q=q,
                   log_is_prior=np.asarray(is_prior.logpdf(theta), dtype=float),
                   is_prior=is_prior, order=order, provenance=dict(provenance or {}))

    @property
    def M(self) -> int:
        return int(self.order.size)

    @property
    def n_distinct(self) -> int:
        return int(self.theta.shape[0])

    def prefix(self, m: int) -> "PosteriorSampleSet":
        """Sample set built from the first ``m`` chain draws."""
        if not 1 <= m <= self.M:
            raise ValueError(f"prefix length must lie in [1, {self.M}]")
        sub = self.order[:m]
        keep = np.unique(sub)
        remap = np.full(self.n_distinct, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        prov = dict(self.provenance, M=int(m), prefix_of=self.M)
        return PosteriorSampleSet(theta=self.theta[keep],
                                  multiplicity=np.bincount(remap[sub], minlength=keep.size),
                                  q=self.q[keep], log_is_prior=self.log_is_prior[keep],
                                  is_prior=self.is_prior, order=remap[sub], provenance=prov)

    def with_qoi_values(self, q) -> "PosteriorSampleSet":
        """Same draws with replaced QoI values (one per distinct state)."""
        q = np.broadcast_to(np.asarray(q, dtype=float), self.q.shape).copy()
        return PosteriorSampleSet(self.theta, self.multiplicity, q, self.log_is_prior,
                                  self.is_prior, self.order, dict(self.provenance))

    def chain_values(self, values) -> np.ndarray:
        """Expand per-distinct-state values to the full chain."""
        return np.asarray(values)[self.order]


@dataclass(frozen=True)
class ISWeightVector:
    """Importance weights for one ``xi`` over the distinct states.

    ``u`` are max-shifted prior ratios, so ``max(u) == 1``; each distinct
    state carries its multiplicity. ``normalized`` gives the weight of a
    single chain draw, summing to one over all ``M`` draws.
    """

    log_ratio: np.ndarray
    u: np.ndarray
    multiplicity: np.ndarray
    shift: float

    @property
    def total(self) -> float:
        return float(self.multiplicity @ self.u)

    @property
    def normalized(self) -> np.ndarray:
        return self.u / self.total

    def expand(self, order) -> np.ndarray:
        """Normalized weight of every chain draw."""
        return self.normalized[order]


def prior_log_ratio(family: GaussianPriorFamily, xi, is_prior: GaussianPrior, theta):
    """``log pi_xi(theta) - log pi_IS(theta)`` for diagonal Gaussian priors.

    Includes the ``0.5 log(det Gamma_IS / det Gamma_xi)`` term, so the
    value equals the difference of two exact log-densities.
    """
    prior = family.prior(xi)
    if prior.dim != is_prior.dim:
        raise ValueError("prior dimensions differ")
    theta = np.asarray(theta, dtype=float)
    quad_is = np.sum((is_prior.mean - theta) ** 2 / is_prior.var, axis=-1)
    quad_xi = np.sum((prior.mean - theta) ** 2 / prior.var, axis=-1)
    logdet = np.sum(np.log(is_prior.var)) - np.sum(np.log(prior.var))
    out = 0.5 * (quad_is - quad_xi) + 0.5 * logdet
    return out if np.ndim(out) else float(out)


def _weights_from_log_ratio(log_ratio, multiplicity, xi=None) -> ISWeightVector:
    log_ratio = np.asarray(log_ratio, dtype=float)
    if not np.all(np.isfinite(log_ratio)):
        raise DegenerateWeightsError(f"non-finite prior log-ratio at xi={_show(xi)}", xi=xi)
    shift = float(np.max(log_ratio))
    u = np.exp(log_ratio - shift)
    if not np.any(u > 0):
        raise DegenerateWeightsError(f"all importance weights vanish at xi={_show(xi)}", xi=xi)
    return ISWeightVector(log_ratio=log_ratio, u=u, multiplicity=multiplicity, shift=shift)


def _show(xi):
    return None if xi is None else np.round(np.asarray(xi, float), 6).tolist()


def is_weights(samples: PosteriorSampleSet, family: GaussianPriorFamily, xi) -> ISWeightVector:
    """Weights of every distinct state for hyperparameters ``xi``."""
    prior = family.prior(xi)
    log_ratio = np.asarray(prior.logpdf(samples.theta)) - samples.log_is_prior
    return _weights_from_log_ratio(log_ratio, samples.multiplicity, xi)


def is_moment(samples: PosteriorSampleSet, family: GaussianPriorFamily, xi, power: int = 1,
              weights: Optional[ISWeightVector] = None) -> float:
    """Self-normalized estimate of ``E_post^xi[q^power]``."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    w = weights if weights is not None else is_weights(samples, family, xi)
    # summed over chain draws in chain order: q == 1 gives 1 exactly, and constant
    # weights reproduce the plain chain average bit for bit
    u = w.u[samples.order]
    return float(np.sum(u * samples.q[samples.order] ** power) / np.sum(u))


def effective_sample_size(samples: PosteriorSampleSet, family: GaussianPriorFamily, xi,
                          weights: Optional[ISWeightVector] = None) -> float:
    """``(sum u)^2 / sum u^2`` over all ``M`` draws, from prior ratios only."""
    w = weights if weights is not None else is_weights(samples, family, xi)
    s1 = float(w.multiplicity @ w.u)
    s2 = float(w.multiplicity @ (w.u * w.u))
    return s1 * s1 / s2


def ess_from_log_weights(log_w, multiplicity=None) -> float:
    """Effective sample size of raw log-weights (one per draw unless counts given)."""
    log_w = np.asarray(log_w, dtype=float)
    mult = np.ones_like(log_w) if multiplicity is None else np.asarray(multiplicity, float)
    w = _weights_from_log_ratio(log_w, mult)
    return float((mult @ w.u) ** 2 / (mult @ (w.u * w.u)))


def batch_log_ratios(samples: PosteriorSampleSet, family: GaussianPriorFamily, xis) -> np.ndarray:
    """``(N, M_hat)`` array of prior log-ratios for a stack of hyperparameters."""
    m, v = family.moments_batch(xis)
    th = samples.theta
    # sum_k (th_k - m_k)^2 / v_k expanded to avoid an (N, M_hat, n) temporary
    inv = 1.0 / v
    quad = (inv @ (th * th).T) - 2.0 * ((m * inv) @ th.T) + np.sum(m * m * inv, axis=1)[:, None]
    log_prior = -0.5 * (quad + np.sum(np.log(2 * np.pi * v), axis=1)[:, None])
    return log_prior - samples.log_is_prior[None, :]


def batch_statistics(samples: PosteriorSampleSet, family: GaussianPriorFamily, xis,
                     chunk: int = 64):
    """First and second IS moments and ESS for every row of ``xis``.

    Returns a dict of arrays ``m1``, ``m2``, ``ess`` and a list ``failed``
    of row indices whose weights were degenerate (their entries are NaN).
    """
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    N = xis.shape[0]
    m1 = np.full(N, np.nan)
    m2 = np.full(N, np.nan)
    ess = np.full(N, np.nan)
    failed = []
    mult = samples.multiplicity.astype(float)
    q = samples.q
    for s in range(0, N, chunk):
        lr = batch_log_ratios(samples, family, xis[s:s + chunk])
        for r, row in enumerate(lr):
            k = s + r
            try:
                w = _weights_from_log_ratio(row, mult, xis[k])
            except DegenerateWeightsError:
                failed.append(k)
                continue
            wm = mult * w.u
            tot = wm.sum()
            m1[k] = wm @ q / tot
            m2[k] = wm @ (q * q) / tot
            ess[k] = tot * tot / (wm @ w.u)
    return {"m1": m1, "m2": m2, "ess": ess, "failed": failed}


def is_standard_error(samples: PosteriorSampleSet, family: GaussianPriorFamily, xi,
                      statistic: str = "mean", n_batches: int = 50) -> float:
    """Delta-method standard error of the self-normalized estimator.

    The influence terms ``w_i (g_i - estimate) / mean(w)`` are averaged in
    contiguous chain batches (batch means), which accounts for MCMC
    autocorrelation. ``statistic`` is ``"mean"`` or ``"var"``.
    """
    w = is_weights(samples, family, xi)
    u = samples.chain_values(w.u)
    q = samples.chain_values(samples.q)
    ubar = u.mean()
    m1 = float(u @ q / u.sum())
    if statistic == "mean":
        z = u * (q - m1) / ubar
    elif statistic == "var":
        m2 = float(u @ (q * q) / u.sum())
        z = u * ((q * q - m2) - 2.0 * m1 * (q - m1)) / ubar
    else:
        raise ValueError("statistic must be 'mean' or 'var'")
    M = z.size
    b = max(2, min(n_batches, M // 2))
    size = M // b
    means = z[: b * size].reshape(b, size).mean(axis=1)
    return float(np.sqrt(np.var(means, ddof=1) / b))


@dataclass
class ESSProfile:
    """Effective sample sizes over a design, in design order."""

    design: np.ndarray
    ess: np.ndarray
    M: int
    failed: list = field(default_factory=list)
    floor: float = 0.0

    @property
    def low(self) -> list:
        return [int(k) for k in np.nonzero(self.ess < self.floor)[0]]

    def sorted_entries(self):
        """``(xi, ess)`` pairs in increasing ESS order; failures (NaN) come first."""
        order = np.argsort(np.nan_to_num(self.ess, nan=-np.inf), kind="stable")
        return [(self.design[k], float(self.ess[k])) for k in order]

    def summary(self) -> dict:
        good = self.ess[np.isfinite(self.ess)]
        if good.size == 0:
            return {"M": self.M, "n": int(self.ess.size), "failed": len(self.failed)}
        return {"M": self.M, "n": int(self.ess.size), "failed": len(self.failed),
                "min": float(good.min()), "median": float(np.median(good)),
                "max": float(good.max()), "below_floor": len(self.low), "floor": self.floor}

    def to_csv(self, path, names, moments=None, meta=None):
        """Columns: hyperparameters, ESS and optionally IS mean / second moment."""
        cols = list(names) + ["ess"]
        rows = [list(x) + [e] for x, e in zip(self.design, self.ess)]
        if moments is not None:
            cols += ["mean", "second_moment"]
            rows = [r + [a, b] for r, a, b in zip(rows, moments["m1"], moments["m2"])]
        return write_csv(path, cols, rows, meta)


def ess_profile(samples: PosteriorSampleSet, family: GaussianPriorFamily, design,
                floor: Optional[float] = None) -> ESSProfile:
    """ESS at every design point; degenerate points are reported, not raised."""
    design = np.asarray(design, dtype=float).reshape(-1, family.box.dim)
    floor = samples.M / 100.0 if floor is None else float(floor)
    if design.shape[0] == 0:
        return ESSProfile(design=design, ess=np.empty(0), M=samples.M, floor=floor)
    stats = batch_statistics(samples, family, design)
    prof = ESSProfile(design=design, ess=stats["ess"], M=samples.M, failed=stats["failed"],
                      floor=floor)
    if prof.low:
        warnings.warn(f"{len(prof.low)} design points have ESS below {floor:g}", RuntimeWarning)
    return prof
