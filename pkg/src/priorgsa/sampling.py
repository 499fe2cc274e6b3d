"""
Latin hypercube designs and the delayed-rejection adaptive Metropolis sampler.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .exceptions import ConfigurationError, EvaluationError
from .io import read_numeric_csv, write_csv
from .problem import HyperparameterBox


def lhs_sample(box: HyperparameterBox, N: int, seed=None) -> np.ndarray:
    """Latin hypercube design of ``N`` points in ``box``.

    Every one-dimensional projection has exactly one point in each of the
    ``N`` equal-width strata. Returns an ``(N, n)`` array.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    sampler = qmc.LatinHypercube(d=box.dim, seed=np.random.default_rng(seed))
    return box.from_unit(sampler.random(N))


@dataclass
class DRAMConfig:
    """Settings for :func:`dram_sample`.

    ``n_stages`` counts proposal tries per step, so 2 means one delayed
    rejection stage and 1 is plain adaptive Metropolis. Stage ``k`` uses
    the stage-one proposal scaled by ``dr_scale**(k-1)`` (standard
    deviation scale).
    """

    proposal_cov: np.ndarray
    n_samples: int = 10_000
    burn_in: int = 1_000
    n_stages: int = 2
    dr_scale: float = 0.2
    adapt_start: int = 1_000
    adapt_interval: int = 100
    adapt_scale: Optional[float] = None  # default 2.38**2 / dim
    epsilon: float = 1e-8
    seed: Optional[int] = 0

    def __post_init__(self):
        self.proposal_cov = np.atleast_2d(np.asarray(self.proposal_cov, dtype=float))
        errs = []
        if self.n_samples < 1:
            errs.append("n_samples must be >= 1")
        if self.burn_in < 0:
            errs.append("burn_in must be >= 0")
        if self.n_stages < 1:
            errs.append("n_stages must be >= 1")
        if not 0 < self.dr_scale < 1:
            errs.append("dr_scale must lie in (0, 1)")
        if self.adapt_start < 1:
            errs.append("adapt_start must be >= 1")
        if self.adapt_interval < 1:
            errs.append("adapt_interval must be >= 1")
        if not self.epsilon > 0:
            errs.append("epsilon must be positive")
        if self.adapt_scale is not None and not self.adapt_scale > 0:
            errs.append("adapt_scale must be positive")
        try:
            np.linalg.cholesky(self.proposal_cov)
        except np.linalg.LinAlgError:
            errs.append("proposal_cov must be symmetric positive definite")
        if errs:
            raise ConfigurationError("; ".join(errs))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["proposal_cov"] = self.proposal_cov.tolist()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MCMCChain:
    """Post burn-in draws.

    ``stage[i]`` is the delayed-rejection stage at which step ``i`` accepted
    its move, or 0 when every stage rejected and the state was repeated.
    """

    samples: np.ndarray
    stage: np.ndarray
    log_target: np.ndarray
    burn_in: int
    seed: Optional[int]
    n_evaluations: int
    final_cov: np.ndarray
    config_hash: str = ""
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.stage > 0))

    @property
    def first_stage_acceptance_rate(self) -> float:
        return float(np.mean(self.stage == 1))

    @property
    def stage_acceptance(self) -> np.ndarray:
        """Fraction of steps accepted at each stage (index 0 = rejected)."""
        return np.bincount(self.stage, minlength=self.stage.max() + 1) / len(self)

    @property
    def n_distinct(self) -> int:
        # the first stored draw is always a new run of identical states
        return int(1 + np.count_nonzero(self.stage[1:] > 0))

    def distinct_ids(self) -> np.ndarray:
        """Run index of each draw; repeated states share an id."""
        ids = np.zeros(len(self), dtype=np.int64)
        ids[1:] = np.cumsum(self.stage[1:] > 0)
        return ids


def write_chain(path, chain: MCMCChain, names=None, meta=None):
    """One row per draw: parameter columns, DR stage, log target."""
    d = chain.samples.shape[1]
    names = list(names or [f"theta{j + 1}" for j in range(d)])
    rows = [list(x) + [int(s), lp] for x, s, lp in zip(chain.samples, chain.stage, chain.log_target)]
    m = {"seed": chain.seed, "config_hash": chain.config_hash, "burn_in": chain.burn_in,
         "n_evaluations": chain.n_evaluations, **(meta or {})}
    return write_csv(path, names + ["stage", "log_target"], rows, m)


def read_chain(path) -> MCMCChain:
    """Inverse of :func:`write_chain`; the final proposal covariance is not stored."""
    meta, cols, arr = read_numeric_csv(path)
    d = len(cols) - 2
    return MCMCChain(samples=arr[:, :d].copy(), stage=arr[:, d].astype(np.int8),
                     log_target=arr[:, d + 1].copy(), burn_in=int(meta.get("burn_in", 0)),
                     seed=meta.get("seed"), n_evaluations=int(meta.get("n_evaluations", 0)),
                     final_cov=np.full((d, d), np.nan), config_hash=meta.get("config_hash", ""))


def _log_q(delta, inv_chol):
    """Gaussian proposal log-density up to a constant shared by all uses."""
    z = inv_chol @ delta
    return -0.5 * float(z @ z)


def _dr_alpha(pts, lps, inv_chols):
    """Delayed-rejection acceptance probability for the path ``pts``.

    ``pts[0]`` is the current state and ``pts[-1]`` the latest proposal;
    ``inv_chols[i]`` whitens the stage-``i+1`` proposal. All proposals are
    centred at the current state, so the last stage is symmetric.
    """
    s = len(pts) - 1
    if lps[-1] == -np.inf:
        return 0.0
    num = 1.0
    den = 1.0
    for k in range(1, s):
        den *= 1.0 - _dr_alpha(pts[:k + 1], lps[:k + 1], inv_chols)
        rev = pts[s:s - k - 1:-1] if s - k - 1 >= 0 else pts[s::-1]
        rlp = lps[s:s - k - 1:-1] if s - k - 1 >= 0 else lps[s::-1]
        num *= 1.0 - _dr_alpha(rev, rlp, inv_chols)
        if num == 0.0:
            return 0.0
    log_r = lps[-1] - lps[0]
    for i in range(1, s):
        ic = inv_chols[i - 1]
        log_r += _log_q(pts[s - i] - pts[s], ic) - _log_q(pts[i] - pts[0], ic)
    if den == 0.0:
        return 1.0
    return float(min(1.0, np.exp(min(log_r, 700.0)) * num / den))


def dram_sample(log_target: Callable, x0, config: DRAMConfig) -> MCMCChain:
    """Delayed-rejection adaptive Metropolis (Haario et al. style).

    Parameters
    ----------
    log_target : callable
        Unnormalized log-density. :class:`EvaluationError` or a non-finite
        value at a proposal counts as a rejection.
    x0 : array_like
        Initial state; the target must be finite there.
    config : DRAMConfig

    Returns
    -------
    MCMCChain
        ``config.n_samples`` draws after discarding ``config.burn_in``.
    """
    rng = np.random.default_rng(config.seed)
    x = np.asarray(x0, dtype=float).copy()
    dim = x.size
    if config.proposal_cov.shape != (dim, dim):
        raise ConfigurationError("proposal_cov does not match the dimension of x0")
    n_eval = 0
    failures = 0

    def evaluate(theta):
        nonlocal n_eval, failures
        n_eval += 1
        try:
            val = float(log_target(theta))
        except EvaluationError:
            failures += 1
            return -np.inf
        return val if np.isfinite(val) else -np.inf

    lp = evaluate(x)
    if not np.isfinite(lp):
        raise ConfigurationError(f"log target is not finite at the initial state {x.tolist()}")

    sd = config.adapt_scale if config.adapt_scale is not None else 2.38 ** 2 / dim
    scales = config.dr_scale ** np.arange(config.n_stages)

    def factors(cov):
        L = np.linalg.cholesky(cov)
        Linv = np.linalg.inv(L)
        return L, [Linv / s for s in scales]

    cov = config.proposal_cov.copy()
    L, inv_chols = factors(cov)

    total = config.burn_in + config.n_samples
    out = np.empty((config.n_samples, dim))
    stage_out = np.zeros(config.n_samples, dtype=np.int8)
    lp_out = np.empty(config.n_samples)

    # running mean / scatter of every visited state (Welford)
    mean = x.copy()
    scatter = np.zeros((dim, dim))
    count = 1

    for step in range(total):
        pts = [x]
        lps = [lp]
        accepted = 0
        for k in range(config.n_stages):
            y = x + scales[k] * (L @ rng.standard_normal(dim))
            pts.append(y)
            lps.append(evaluate(y))
            alpha = _dr_alpha(pts, lps, inv_chols) if k else (
                0.0 if lps[1] == -np.inf else min(1.0, np.exp(min(lps[1] - lp, 0.0))))
            if rng.random() < alpha:
                x, lp = y, lps[-1]
                accepted = k + 1
                break

        count += 1
        delta = x - mean
        mean = mean + delta / count
        scatter += np.outer(delta, x - mean)

        if step >= config.adapt_start and (step - config.adapt_start) % config.adapt_interval == 0:
            emp = scatter / (count - 1)
            new_cov = sd * (emp + config.epsilon * np.eye(dim))
            try:
                L, inv_chols = factors(new_cov)
                cov = new_cov
            except np.linalg.LinAlgError:
                pass

        j = step - config.burn_in
        if j >= 0:
            out[j] = x
            stage_out[j] = accepted
            lp_out[j] = lp

    chain = MCMCChain(samples=out, stage=stage_out, log_target=lp_out, burn_in=config.burn_in,
                      seed=config.seed, n_evaluations=n_eval, final_cov=cov,
                      config_hash=config.digest())
    rate = chain.first_stage_acceptance_rate
    if chain.acceptance_rate == 0.0:
        chain.diagnostics.append("all proposals rejected after burn-in")
        warnings.warn("DRAM chain rejected every proposal after burn-in", RuntimeWarning)
    elif not 0.1 < rate < 0.6:
        msg = f"first-stage acceptance rate {rate:.3f} outside (0.1, 0.6)"
        chain.diagnostics.append(msg)
        warnings.warn(msg, RuntimeWarning)
    if failures:
        chain.diagnostics.append(f"{failures} proposals failed to evaluate and were rejected")
    return chain


def default_dram_config(is_var, n_samples, burn_in=1_000, seed=0, **kw) -> DRAMConfig:
    """Defaults used by the pipeline: proposal ``0.1**2 * Gamma_IS``."""
    return DRAMConfig(proposal_cov=0.01 * np.diag(np.asarray(is_var, float)),
                      n_samples=n_samples, burn_in=burn_in, seed=seed, **kw)
