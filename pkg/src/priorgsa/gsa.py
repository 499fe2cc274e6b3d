"""
End-to-end sensitivity pipeline and a pick-freeze Monte Carlo Sobol' estimator.

:func:`run_algorithm1` runs one DRAM chain under a wide importance-sampling
prior, caches the QoI and prior density at the distinct draws, reweights
them at every point of a Latin hypercube design to evaluate an HS map, fits
surrogates to those evaluations and reads off Sobol' indices. The chain is
the only expensive step; everything after it reuses the cached values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from .exceptions import ConfigurationError, DomainError, StageError
from .hsmaps import (HSMapEvaluations, MapSolverConfig, eval_is_map_over_design,
                     eval_map_over_design, solve_map_with_prior)
from .importance import ESSProfile, PosteriorSampleSet, batch_statistics, ess_profile
from .io import config_hash, write_csv, write_json
from .problem import GaussianPrior, HyperparameterBox, InverseProblem
from .sampling import DRAMConfig, MCMCChain, dram_sample, lhs_sample, write_chain
from .surrogates.pce import fit_pce, pce_sobol
from .surrogates.report import SobolIndexReport
from .surrogates.swelm import P_GRID, fit_swelm, swelm_sobol

SURROGATE_KINDS = ("pce", "swelm")


@dataclass
class SurrogateSettings:
    """Fit settings shared by every surrogate in a run."""

    kinds: tuple = SURROGATE_KINDS
    pce_degree: int = 5
    cv_folds: int = 10
    penalty_grid: Optional[Sequence[float]] = None
    p_grid: tuple = P_GRID
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.kinds = tuple(self.kinds)
        self.p_grid = tuple(float(p) for p in self.p_grid)
        errors = self.violations()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def violations(self) -> list:
        out = []
        if not self.kinds:
            out.append("at least one surrogate kind is required")
        bad = [k for k in self.kinds if k not in SURROGATE_KINDS]
        if bad:
            out.append(f"unknown surrogate kinds {bad}; choose from {list(SURROGATE_KINDS)}")
        if self.pce_degree < 0:
            out.append("pce_degree must be >= 0")
        if self.cv_folds < 2:
            out.append("cv_folds must be >= 2")
        if not self.p_grid or any(not 0 < p <= 1 for p in self.p_grid):
            out.append("p_grid values must lie in (0, 1]")
        if not 0 < self.validation_fraction < 1:
            out.append("validation_fraction must lie in (0, 1)")
        return out

    def to_dict(self) -> dict:
        return {"kinds": list(self.kinds), "pce_degree": self.pce_degree,
                "cv_folds": self.cv_folds,
                "penalty_grid": None if self.penalty_grid is None else list(self.penalty_grid),
                "p_grid": list(self.p_grid), "validation_fraction": self.validation_fraction,
                "seed": self.seed}


@dataclass
class Algorithm1Config:
    """Settings for :func:`run_algorithm1`.

    ``x0`` is the chain's initial state; by default the MAP point under the
    IS prior. ``schedule`` lists increasing chain-prefix lengths for
    :func:`convergence_study`.
    """

    statistic: str
    N: int
    dram: DRAMConfig
    is_prior: GaussianPrior
    surrogates: SurrogateSettings = field(default_factory=SurrogateSettings)
    design_seed: int = 0
    schedule: tuple = ()
    x0: Optional[np.ndarray] = None
    map_solver: MapSolverConfig = field(default_factory=MapSolverConfig)

    def __post_init__(self):
        self.schedule = tuple(int(m) for m in self.schedule)
        errors = self.violations()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def violations(self) -> list:
        out = []
        if self.statistic not in ("mean", "var"):
            out.append(f"statistic must be 'mean' or 'var', got {self.statistic!r} "
                       "(use run_map_gsa for 'map')")
        if self.N < 1:
            out.append(f"design size N must be >= 1, got {self.N}")
        s = self.schedule
        if any(b <= a for a, b in zip(s, s[1:])):
            out.append(f"schedule {list(s)} must be strictly increasing")
        if s and (s[0] < 1 or s[-1] > self.dram.n_samples):
            out.append(f"schedule entries must lie in [1, {self.dram.n_samples}]")
        if self.x0 is not None and np.size(self.x0) != self.is_prior.dim:
            out.append("x0 must match the parameter dimension")
        return out

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "N": self.N, "dram": self.dram.to_dict(),
                "is_prior": {"mean": self.is_prior.mean.tolist(),
                             "var": self.is_prior.var.tolist()},
                "surrogates": self.surrogates.to_dict(), "design_seed": self.design_seed,
                "schedule": list(self.schedule),
                "x0": None if self.x0 is None else np.asarray(self.x0, float).tolist()}

    def digest(self) -> str:
        return config_hash(self.to_dict())


@dataclass
class GSAResult:
    """Everything a pipeline run produced, plus the files it wrote."""

    evaluations: HSMapEvaluations
    surrogates: dict
    reports: dict
    ess: Optional[ESSProfile] = None
    samples: Optional[PosteriorSampleSet] = None
    chain: Optional[MCMCChain] = None
    artifacts: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        for kind, rep in self.reports.items():
            out[kind] = {**rep.as_dict(), "ranking": rep.ranking()}
        return out


class _Stage:
    """Re-raise any error inside the block as a :class:`StageError`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError) or not isinstance(exc, Exception):
            return False
        raise StageError(self.name, exc) from exc


def _meta(config: Algorithm1Config, **extra):
    return {"config_hash": config.digest(), "mcmc_seed": config.dram.seed,
            "design_seed": config.design_seed, "surrogate_seed": config.surrogates.seed,
            **extra}


def sample_posterior(problem: InverseProblem, config: Algorithm1Config):
    """Steps 1-8: one DRAM run under the IS prior and the per-draw cache.

    Returns ``(chain, samples)``.
    """
    prior = config.is_prior
    with _Stage("initial-state"):
        if config.x0 is None:
            x0 = solve_map_with_prior(problem, prior, config.map_solver).theta
        else:
            x0 = np.asarray(config.x0, dtype=float)
    with _Stage("mcmc"):
        chain = dram_sample(problem.log_posterior_with(prior), x0, config.dram)
    with _Stage("cache"):
        samples = PosteriorSampleSet.from_chain(chain, problem.qoi, prior)
    return chain, samples


def fit_surrogates(evaluations: HSMapEvaluations, box: HyperparameterBox,
                   settings: SurrogateSettings, provenance=None):
    """Fit every requested surrogate and extract its indices.

    Design points whose value failed (NaN) are dropped. Returns
    ``(surrogates, reports)`` keyed by surrogate kind.
    """
    ok = evaluations.ok
    X, y = evaluations.design[ok], evaluations.values[ok]
    prov = {"N": int(ok.sum()), "statistic": evaluations.kind, **(provenance or {})}
    surrogates, reports = {}, {}
    for kind in settings.kinds:
        with _Stage(f"fit:{kind}"):
            if kind == "pce":
                s = fit_pce(X, y, box, degree=settings.pce_degree, cv_folds=settings.cv_folds,
                            penalty_grid=settings.penalty_grid, seed=settings.seed)
            else:
                s = fit_swelm(X, y, box, validation_fraction=settings.validation_fraction,
                              p_grid=settings.p_grid, seed=settings.seed)
        with _Stage(f"indices:{kind}"):
            rep = (pce_sobol if kind == "pce" else swelm_sobol)(s, provenance=prov)
        surrogates[kind] = s
        reports[kind] = rep
    return surrogates, reports


def analyze_samples(problem: InverseProblem, samples: PosteriorSampleSet,
                    config: Algorithm1Config, design=None):
    """Steps 9-12 on an existing sample set.

    Returns ``(evaluations, ess_profile, surrogates, reports)``.
    """
    box = problem.box
    with _Stage("design"):
        if design is None:
            design = lhs_sample(box, config.N, seed=config.design_seed)
        else:
            design = box.check(design)
    with _Stage("evaluate"):
        evals = eval_is_map_over_design(samples, problem.prior_family, design,
                                        kind=config.statistic, names=box.names)
        evals.meta.update(_meta(config, M=samples.M))
        prof = ess_profile(samples, problem.prior_family, design)
    surrogates, reports = fit_surrogates(
        evals, box, config.surrogates,
        provenance={"M": samples.M, "mcmc_seed": config.dram.seed,
                    "design_seed": config.design_seed, "surrogate_seed": config.surrogates.seed})
    return evals, prof, surrogates, reports


def run_algorithm1(problem: InverseProblem, config: Algorithm1Config, out_dir=None,
                   samples: Optional[PosteriorSampleSet] = None, meta=None) -> GSAResult:
    """Sensitivity of a posterior mean or variance to the prior hyperparameters.

    Parameters
    ----------
    problem : InverseProblem
    config : Algorithm1Config
    out_dir : path, optional
        When given, the chain, ESS profile, HS-map evaluations, fitted
        surrogates and index reports are written there.
    samples : PosteriorSampleSet, optional
        Reuse a cached chain (e.g. to study several statistics); the DRAM
        run is then skipped.
    meta : dict, optional
        Extra header entries for every written file.

    Raises
    ------
    StageError
        Wrapping the underlying error, labelled with the failing stage.
    """
    chain = None
    if samples is None:
        chain, samples = sample_posterior(problem, config)
    evals, prof, surrogates, reports = analyze_samples(problem, samples, config)
    result = GSAResult(evaluations=evals, surrogates=surrogates, reports=reports, ess=prof,
                       samples=samples, chain=chain)
    if out_dir is not None:
        with _Stage("persist"):
            result.artifacts = persist_result(result, problem, config, out_dir, meta)
    return result


def persist_result(result: GSAResult, problem: InverseProblem, config: Algorithm1Config,
                   out_dir, extra=None) -> list:
    """Write a run's artifacts; returns the list of paths written."""
    out = Path(out_dir)
    stat = result.evaluations.kind
    meta = _meta(config, M=result.evaluations.meta.get("M"), **(extra or {}))
    paths = []
    if result.chain is not None:
        p = out / "chain.csv"
        if not p.exists():
            paths.append(write_chain(p, result.chain, problem.theta_names, meta))
    if result.ess is not None:
        mom = batch_statistics(result.samples, problem.prior_family, result.ess.design)
        paths.append(result.ess.to_csv(out / f"ess_{stat}.csv", problem.box.names, mom,
                                       {**meta, **result.ess.summary()}))
    paths.append(result.evaluations.to_csv(out / f"hsmap_{stat}.csv", meta))
    for kind, s in result.surrogates.items():
        paths.append(write_json(out / f"surrogate_{stat}_{kind}.json",
                                {**s.to_dict(), "provenance": {**meta, "statistic": stat}}))
        paths.append(result.reports[kind].to_csv(out / f"sobol_{stat}_{kind}.csv", meta))
    return [str(p) for p in paths]


def run_map_gsa(problem: InverseProblem, design, solver: MapSolverConfig = MapSolverConfig(),
                surrogates: SurrogateSettings = SurrogateSettings(), workers: int = 1,
                out_dir=None, meta=None) -> GSAResult:
    """Sensitivity of the QoI at the MAP point, from direct MAP solves over ``design``."""
    box = problem.box
    with _Stage("evaluate"):
        evals = eval_map_over_design(problem, box.check(design), solver, workers=workers)
        evals.meta.update(meta or {})
    fitted, reports = fit_surrogates(evals, box, surrogates, provenance=meta)
    result = GSAResult(evaluations=evals, surrogates=fitted, reports=reports)
    if out_dir is not None:
        out = Path(out_dir)
        paths = [evals.to_csv(out / "hsmap_map.csv", meta)]
        for kind, s in fitted.items():
            paths.append(write_json(out / f"surrogate_map_{kind}.json",
                                    {**s.to_dict(), "provenance": {**(meta or {}),
                                                                   "statistic": "map"}}))
            paths.append(reports[kind].to_csv(out / f"sobol_map_{kind}.csv", meta))
        result.artifacts = [str(p) for p in paths]
    return result


def pick_freeze_sobol(function: Callable, box: HyperparameterBox, N_mc: int, seed=0,
                      chunk: int = 100_000) -> SobolIndexReport:
    """Monte Carlo first-order and total Sobol' indices.

    Uses two independent uniform sample matrices ``A``, ``B`` and the hybrids
    ``AB_k`` (``A`` with column ``k`` from ``B``)::

        S_k     = mean(f(B) (f(AB_k) - f(A))) / V
        S_k^tot = mean((f(A) - f(AB_k))^2) / (2 V)

    ``function`` maps an ``(m, n)`` array to ``m`` values. Costs
    ``(n + 2) N_mc`` evaluations, done in blocks of ``chunk`` rows. Negative
    estimates are returned as they are.
    """
    N_mc = int(N_mc)
    if N_mc < 2:
        raise ConfigurationError(f"N_mc must be >= 2, got {N_mc}")
    rng = np.random.default_rng(seed)
    n = box.dim
    A = box.from_unit(rng.random((N_mc, n)))
    B = box.from_unit(rng.random((N_mc, n)))

    def f(X):
        return np.concatenate([np.asarray(function(X[s:s + chunk]), dtype=float).ravel()
                               for s in range(0, X.shape[0], chunk)])

    fA, fB = f(A), f(B)
    V = float(np.var(np.concatenate([fA, fB])))
    prov = {"N_mc": N_mc, "seed": seed, "estimator": "saltelli-jansen"}
    if V <= 1e-14 * max(1.0, float(np.mean(np.abs(fA))) ** 2):
        return SobolIndexReport.constant_function(box.names, "pick-freeze", prov)
    S = np.empty(n)
    T = np.empty(n)
    for k in range(n):
        AB = A.copy()
        AB[:, k] = B[:, k]
        fAB = f(AB)
        S[k] = np.mean(fB * (fAB - fA)) / V
        T[k] = 0.5 * np.mean((fA - fAB) ** 2) / V
    return SobolIndexReport(box.names, S, T, V, "pick-freeze", False, prov)


@dataclass
class ConvergenceTable:
    """Long-format rows ``(M, input, index, value, surrogate)`` plus the reports."""

    rows: list
    reports: dict

    COLUMNS = ("M", "input", "index", "value", "surrogate")

    def to_csv(self, path, meta=None):
        return write_csv(path, list(self.COLUMNS), self.rows, meta)

    def final(self, kind) -> SobolIndexReport:
        return self.reports[max(self.reports)][kind]


def convergence_study(problem: InverseProblem, config: Algorithm1Config,
                      samples: Optional[PosteriorSampleSet] = None, out_dir=None, meta=None):
    """Indices recomputed on chain prefixes of lengths ``config.schedule``.

    The same design and surrogate seeds are used at every prefix, so the
    row for the full chain equals :func:`run_algorithm1` exactly. Returns
    ``(table, samples)``.
    """
    if not config.schedule:
        raise ConfigurationError("convergence study needs a non-empty schedule")
    if samples is None:
        _, samples = sample_posterior(problem, config)
    if config.schedule[-1] > samples.M:
        raise ConfigurationError(f"schedule exceeds the {samples.M} available draws")
    design = lhs_sample(problem.box, config.N, seed=config.design_seed)
    rows, reports = [], {}
    for m in config.schedule:
        sub = samples.prefix(m)
        _, _, _, reps = analyze_samples(problem, sub, config, design=design)
        reports[m] = reps
        for kind, rep in reps.items():
            for name, s, t in rep.rows():
                rows.append((m, name, "first_order", s, kind))
                rows.append((m, name, "total", t, kind))
    table = ConvergenceTable(rows=rows, reports=reports)
    if out_dir is not None:
        table.to_csv(Path(out_dir) / f"convergence_{config.statistic}.csv",
                     _meta(config, statistic=config.statistic, **(meta or {})))
    return table, samples


@dataclass
class FixCompareResult:
    full: HSMapEvaluations
    fixed: HSMapEvaluations
    fixed_values: dict

    @property
    def ks_statistic(self) -> float:
        return float(ks_2samp(self.full.values[self.full.ok],
                              self.fixed.values[self.fixed.ok]).statistic)

    def to_csv(self, path, meta=None):
        rows = list(zip(self.full.values, self.fixed.values))
        m = {"statistic": self.full.kind, "fixed": self.fixed_values,
             "ks_statistic": self.ks_statistic, **(meta or {})}
        return write_csv(path, ["full", "fixed"], rows, m)


def freeze_design(design, box: HyperparameterBox, fixed: dict) -> np.ndarray:
    """Copy of ``design`` with the named columns set to the given values."""
    unknown = [k for k in fixed if k not in box.names]
    if unknown:
        raise ConfigurationError(f"unknown hyperparameter names {unknown}; "
                                 f"known: {list(box.names)}")
    out = np.array(design, dtype=float, copy=True)
    for name, val in fixed.items():
        j = box.names.index(name)
        if not box.lower[j] <= val <= box.upper[j]:
            raise DomainError(f"fixed value {name}={val} outside [{box.lower[j]}, {box.upper[j]}]")
        out[:, j] = val
    return out


def compare_fixed(evaluate: Callable, box: HyperparameterBox, design, fixed: dict):
    """Evaluate an HS map on ``design`` and on its frozen copy.

    ``evaluate`` maps a design array to an :class:`HSMapEvaluations`.
    """
    frozen = freeze_design(design, box, fixed)
    return FixCompareResult(full=evaluate(np.asarray(design, float)), fixed=evaluate(frozen),
                            fixed_values=dict(fixed))


def fix_and_compare(problem: InverseProblem, config: Algorithm1Config, fixed: dict,
                    samples: Optional[PosteriorSampleSet] = None, statistic=None,
                    workers: int = 1) -> FixCompareResult:
    """HS-map values before and after freezing some hyperparameters.

    ``statistic`` defaults to ``config.statistic`` and may also be ``"map"``.
    Importance-sampled statistics reuse ``samples`` when given.
    """
    statistic = statistic or config.statistic
    box = problem.box
    design = lhs_sample(box, config.N, seed=config.design_seed)
    if statistic == "map":
        def evaluate(X):
            return eval_map_over_design(problem, X, config.map_solver, workers=workers)
    else:
        if samples is None:
            _, samples = sample_posterior(problem, config)

        def evaluate(X):
            return eval_is_map_over_design(samples, problem.prior_family, X, kind=statistic,
                                           names=box.names)
    with _Stage("evaluate"):
        return compare_fixed(evaluate, box, design, fixed)
