"""
Hyperparameter-to-statistic (HS) maps.

``F_mean`` and ``F_var`` are importance-sampling estimates from one
:class:`~priorgsa.importance.PosteriorSampleSet`; ``F_MAP`` evaluates the
QoI at the MAP point, found by prior-regularized nonlinear least squares.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .exceptions import EvaluationError, NegativeVarianceError, OptimizationError
from .importance import PosteriorSampleSet, batch_statistics, is_moment, is_weights
from .io import write_csv
from .problem import GaussianPrior, InverseProblem

KINDS = ("mean", "var", "map")
VAR_NEG_RTOL = 1e-12


@dataclass
class HSMapEvaluations:
    """Design points, HS-map values and per-point diagnostics."""

    kind: str
    design: np.ndarray
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.design.shape[0] != self.values.size:
            raise ValueError("design and values must have equal length")
        if self.kind == "var" and np.any(self.values[np.isfinite(self.values)] < 0):
            raise ValueError("variance values must be non-negative")
        if not self.names:
            self.names = tuple(f"xi{j + 1}" for j in range(self.design.shape[1]))

    def __len__(self):
        return self.values.size

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.values)

    def to_csv(self, path, meta=None):
        diag_cols = sorted(self.diagnostics)
        cols = list(self.names) + ["value"] + diag_cols
        rows = []
        for k in range(len(self)):
            rows.append(list(self.design[k]) + [self.values[k]]
                        + [self.diagnostics[c][k] for c in diag_cols])
        return write_csv(path, cols, rows, {"statistic": self.kind, **self.meta, **(meta or {})})


@dataclass
class MapSolverConfig:
    max_iter: int = 200
    gtol: float = 1e-10
    xtol: float = 1e-10
    n_restarts: int = 3
    dispersion: float = 0.5
    seed: Optional[int] = 0
    # central differences: step near eps**(1/3) balances truncation and round-off
    fd_rel_step: float = 6e-6
    fd_abs_step: float = 1e-8

    def __post_init__(self):
        if not (self.gtol > 0 and self.xtol > 0):
            raise ValueError("tolerances must be positive")
        if self.n_restarts < 1 or self.max_iter < 1:
            raise ValueError("n_restarts and max_iter must be >= 1")


def eval_F_mean(samples: PosteriorSampleSet, family, xi) -> float:
    """Posterior mean of the QoI under the prior selected by ``xi``."""
    return is_moment(samples, family, xi, 1)


def _checked_variance(m1, m2, xi=None):
    var = m2 - m1 * m1
    if var >= 0:
        return var
    scale = max(abs(m2), m1 * m1, np.finfo(float).tiny)
    if -var <= VAR_NEG_RTOL * scale:
        warnings.warn(f"variance {var:.3e} clamped to 0 at xi={xi}", RuntimeWarning)
        return 0.0
    raise NegativeVarianceError(f"negative variance {var:.6e} at xi={xi}; weights are broken")


def eval_F_var(samples: PosteriorSampleSet, family, xi) -> float:
    """Posterior variance of the QoI under the prior selected by ``xi``."""
    w = is_weights(samples, family, xi)
    m1 = is_moment(samples, family, xi, 1, weights=w)
    m2 = is_moment(samples, family, xi, 2, weights=w)
    return _checked_variance(m1, m2, xi)


def eval_is_map_over_design(samples: PosteriorSampleSet, family, design, kind="mean",
                            names=()) -> HSMapEvaluations:
    """``F_mean`` or ``F_var`` at every design point, with ESS diagnostics."""
    if kind not in ("mean", "var"):
        raise ValueError("importance sampling supports the 'mean' and 'var' statistics")
    design = np.atleast_2d(np.asarray(design, dtype=float))
    stats = batch_statistics(samples, family, design)
    if kind == "mean":
        values = stats["m1"]
    else:
        values = np.array([_checked_variance(a, b, design[k]) if np.isfinite(a) else np.nan
                           for k, (a, b) in enumerate(zip(stats["m1"], stats["m2"]))])
    return HSMapEvaluations(kind=kind, design=design, values=values,
                            diagnostics={"ess": stats["ess"]}, names=tuple(names),
                            meta={"M": samples.M, "failed": stats["failed"]})


def map_residuals(problem: InverseProblem, xi):
    """Residual function whose squared norm is the MAP objective minus a constant."""
    prior = problem.prior_family.prior(xi)
    return _residuals(problem, prior), prior


def _residuals(problem: InverseProblem, prior: GaussianPrior):
    sd = np.sqrt(prior.var)

    def fun(theta):
        r = problem.forward(theta) - problem.noise.data
        return np.concatenate([problem.noise.whiten(r), (theta - prior.mean) / sd])

    return fun


def map_objective(problem: InverseProblem, xi, theta) -> float:
    """``J(theta) = r^T Gamma_noise^{-1} r - 2 log pi_xi(theta)``."""
    r = problem.forward(theta) - problem.noise.data
    z = problem.noise.whiten(r)
    return float(z @ z) - 2.0 * problem.log_prior(xi, theta)


@dataclass
class MapResult:
    theta: np.ndarray
    value: float
    objective: float
    converged: bool
    grad_norm: float
    n_starts: int
    statuses: list


def solve_map(problem: InverseProblem, xi, config: MapSolverConfig = MapSolverConfig()) -> MapResult:
    """MAP point for hyperparameters ``xi``.

    Linear forward models use the normal equations. Otherwise a
    trust-region least-squares solver with finite-difference Jacobians runs
    from the prior mean and ``n_restarts - 1`` perturbed starts; the lowest
    objective wins.
    """
    try:
        return solve_map_with_prior(problem, problem.prior_family.prior(xi), config)
    except OptimizationError as exc:
        raise OptimizationError(f"{exc} at xi={np.asarray(xi).tolist()}",
                                best_value=exc.best_value, best_theta=exc.best_theta) from None


def solve_map_with_prior(problem: InverseProblem, prior: GaussianPrior,
                         config: MapSolverConfig = MapSolverConfig()) -> MapResult:
    """MAP point under an explicit Gaussian prior (see :func:`solve_map`)."""
    fun = _residuals(problem, prior)
    if problem.forward.is_linear:
        A = problem.forward.matrix
        P = problem.noise.precision
        prec = A.T @ P @ A + np.diag(1.0 / prior.var)
        theta = np.linalg.solve(prec, A.T @ P @ problem.noise.data + prior.mean / prior.var)
        r = fun(theta)
        grad = 2.0 * (prec @ theta - (A.T @ P @ problem.noise.data + prior.mean / prior.var))
        return MapResult(theta=theta, value=float(problem.qoi(theta)), objective=float(r @ r),
                         converged=True, grad_norm=float(np.linalg.norm(grad)), n_starts=1,
                         statuses=["normal-equations"])

    rng = np.random.default_rng(config.seed)
    sd = np.sqrt(prior.var)
    starts = [prior.mean.copy()]
    for _ in range(config.n_restarts - 1):
        starts.append(prior.mean + config.dispersion * sd * rng.standard_normal(prior.dim))

    def jac(theta):
        h = np.maximum(config.fd_rel_step * np.abs(theta), config.fd_abs_step)
        J = None
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h[i]
            tm[i] -= h[i]
            col = (fun(tp) - fun(tm)) / (tp[i] - tm[i])
            if J is None:
                J = np.empty((col.size, theta.size))
            J[:, i] = col
        return J

    best = None
    statuses = []
    for x0 in starts:
        try:
            res = least_squares(fun, x0, jac=jac, method="trf", gtol=config.gtol,
                                xtol=config.xtol, ftol=1e-15, max_nfev=config.max_iter)
        except EvaluationError as exc:
            statuses.append(f"failed: {exc}")
            continue
        statuses.append(res.message)
        obj = float(2.0 * res.cost)
        gnorm = float(np.linalg.norm(2.0 * res.jac.T @ res.fun))
        cand = (obj, res.x, res.status > 0, gnorm)
        if best is None or obj < best[0]:
            best = cand
    if best is None:
        raise OptimizationError("every MAP start failed")
    obj, theta, ok, gnorm = best
    value = float(problem.qoi(theta))
    if not ok:
        raise OptimizationError("MAP solve did not converge", best_value=value,
                                best_theta=theta)
    return MapResult(theta=theta, value=value, objective=obj, converged=True, grad_norm=gnorm,
                     n_starts=len(starts), statuses=statuses)


def eval_F_map(problem: InverseProblem, xi, config: MapSolverConfig = MapSolverConfig()) -> float:
    """QoI at the MAP point for hyperparameters ``xi``."""
    return solve_map(problem, xi, config).value


def _map_point(args):
    problem, xi, config = args
    try:
        r = solve_map(problem, xi, config)
        return r.value, r.grad_norm, r.objective, ""
    except (OptimizationError, EvaluationError) as exc:
        best = getattr(exc, "best_value", None)
        return np.nan, np.nan, np.nan, f"{type(exc).__name__}: {exc} (best={best})"


def eval_map_over_design(problem: InverseProblem, design,
                         config: MapSolverConfig = MapSolverConfig(),
                         max_fail_fraction: float = 0.1, workers: int = 1) -> HSMapEvaluations:
    """``F_MAP`` at every design point; fails only if too many points fail."""
    design = np.atleast_2d(np.asarray(design, dtype=float))
    jobs = [(problem, xi, config) for xi in design]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(_map_point, jobs))
    else:
        out = [_map_point(j) for j in jobs]
    values = np.array([o[0] for o in out])
    errors = {k: o[3] for k, o in enumerate(out) if o[3]}
    if len(errors) > max_fail_fraction * len(design):
        raise OptimizationError(f"{len(errors)} of {len(design)} MAP solves failed; first: "
                                f"{next(iter(errors.values()))}")
    return HSMapEvaluations(kind="map", design=design, values=values,
                            diagnostics={"grad_norm": np.array([o[1] for o in out]),
                                         "objective": np.array([o[2] for o in out])},
                            names=tuple(problem.box.names),
                            meta={"failed": sorted(errors), "solver_seed": config.seed})
