"""
Command-line front end.

::

    python3 -m priorgsa run          --config configs/linear.json --out results/linear
    python3 -m priorgsa benchmark    --config configs/linear.json
    python3 -m priorgsa convergence  --config configs/linear.json
    python3 -m priorgsa fix-compare  --config configs/seir.json --fix m_log_gamma=-1.5

Every verb writes CSV tables (17 significant digits, ``#`` header with the
config hash and seeds) and a ``manifest.json`` listing every file written.
Exit status is 0 on success, 2 for configuration errors and 1 for failures
inside a pipeline stage.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .exceptions import ConfigurationError, PriorGSAError, StageError
from .gsa import (convergence_study, fix_and_compare, pick_freeze_sobol,
                  run_algorithm1, run_map_gsa, sample_posterior)
from .io import write_csv, write_json
from .sampling import lhs_sample

log = logging.getLogger("priorgsa")


class Run:
    """Output directory bookkeeping shared by the verbs."""

    def __init__(self, verb: str, cfg: RunConfig):
        self.verb = verb
        self.cfg = cfg
        self.out = Path(cfg.raw["output"]["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.summary = {}
        self.t0 = time.perf_counter()

    @property
    def meta(self) -> dict:
        return {"config_hash": self.cfg.hash, "seeds": self.cfg.seeds, "verb": self.verb}

    def add(self, paths):
        for p in paths if isinstance(paths, (list, tuple)) else [paths]:
            if str(p) not in self.artifacts:
                self.artifacts.append(str(p))

    def finish(self) -> Path:
        manifest = {"verb": self.verb, "config": self.cfg.raw, "config_source": self.cfg.source,
                    "config_hash": self.cfg.hash, "seeds": self.cfg.seeds,
                    "artifacts": self.artifacts, "summary": self.summary,
                    "elapsed_seconds": round(time.perf_counter() - self.t0, 3)}
        return write_json(self.out / "manifest.json", manifest)


def _report_summary(reports: dict) -> dict:
    return {k: {"total": dict(zip(r.names, r.total.tolist())),
                "first_order": dict(zip(r.names, r.first_order.tolist())),
                "ranking": r.ranking(), "constant": r.constant}
            for k, r in reports.items()}


def cmd_run(cfg: RunConfig) -> Run:
    """Algorithm 1 for every configured statistic, sharing one chain."""
    run = Run("run", cfg)
    problem = cfg.problem()
    samples = None
    for stat in cfg.raw["statistics"]:
        if stat == "map":
            design = lhs_sample(problem.box, cfg.raw["design"]["N"], seed=cfg.seeds["design"])
            res = run_map_gsa(problem, design, cfg.map_solver(), cfg.surrogate_settings(),
                              workers=cfg.workers, out_dir=run.out, meta=run.meta)
        else:
            a1 = cfg.algorithm1(stat)
            res = run_algorithm1(problem, a1, out_dir=run.out, samples=samples, meta=run.meta)
            if samples is None:
                samples = res.samples
                ch = res.chain
                run.summary["mcmc"] = {"M": len(ch), "acceptance_rate": ch.acceptance_rate,
                                       "first_stage_acceptance_rate":
                                           ch.first_stage_acceptance_rate,
                                       "n_distinct": ch.n_distinct,
                                       "diagnostics": ch.diagnostics}
            run.summary[f"ess_{stat}"] = res.ess.summary()
        run.add(res.artifacts)
        run.summary[stat] = _report_summary(res.reports)
        log.info("%s: %s", stat, {k: r.ranking() for k, r in res.reports.items()})
    return run


def _analytic_maps(problem):
    if not problem.forward.is_linear or problem.qoi.__name__ != "quadratic_qoi":
        raise ConfigurationError(
            f"benchmark needs analytic HS maps; problem '{problem.name}' has none "
            "(only linear forward models with the sum-of-squares QoI are supported)")
    from .benchmarks.linear import analytic_map_functions, posterior_from_prior
    f_mean, f_var = analytic_map_functions(problem)

    def f_map(xis):
        # the posterior is Gaussian, so the MAP point is the posterior mean
        return np.array([problem.qoi(posterior_from_prior(problem, problem.prior_family.prior(x))[0])
                         for x in np.atleast_2d(xis)])

    return {"mean": f_mean, "var": f_var, "map": f_map}


def cmd_benchmark(cfg: RunConfig) -> Run:
    """Pick-freeze indices of the analytic HS maps."""
    run = Run("benchmark", cfg)
    problem = cfg.problem()
    maps = _analytic_maps(problem)
    n_mc = cfg.raw["benchmark"]["N_mc"]
    for stat in cfg.raw["statistics"]:
        rep = pick_freeze_sobol(maps[stat], problem.box, n_mc, seed=cfg.seeds["benchmark"])
        run.add(rep.to_csv(run.out / f"benchmark_{stat}.csv", {**run.meta, "statistic": stat}))
        run.summary[stat] = _report_summary({"pick-freeze": rep})
    return run


def cmd_convergence(cfg: RunConfig) -> Run:
    """Indices on increasing chain prefixes, as a long-format table."""
    if not cfg.raw["convergence"]["schedule"]:
        raise ConfigurationError("convergence needs convergence.schedule in the configuration")
    run = Run("convergence", cfg)
    problem = cfg.problem()
    samples = None
    stats = [s for s in cfg.raw["statistics"] if s != "map"]
    if not stats:
        raise ConfigurationError("convergence applies to the 'mean' and 'var' statistics")
    for stat in stats:
        table, samples = convergence_study(problem, cfg.algorithm1(stat), samples=samples,
                                           out_dir=run.out, meta=run.meta)
        run.add(run.out / f"convergence_{stat}.csv")
        run.summary[stat] = {str(m): _report_summary(r) for m, r in table.reports.items()}
    return run


def _kde_table(a, b, n_grid=200):
    """Gaussian KDE of both samples on a shared grid, or None if degenerate."""
    from scipy.stats import gaussian_kde
    both = np.concatenate([a, b])
    lo, hi = both.min(), both.max()
    if not hi > lo:
        return None
    pad = 0.1 * (hi - lo)
    x = np.linspace(lo - pad, hi + pad, n_grid)
    cols = [x]
    for s in (a, b):
        try:
            cols.append(gaussian_kde(s)(x))
        except (np.linalg.LinAlgError, ValueError):
            cols.append(np.full(n_grid, np.nan))
    return np.column_stack(cols)


def cmd_fix_compare(cfg: RunConfig, fixed=None) -> Run:
    """HS-map values over the full design and with some inputs frozen."""
    run = Run("fix-compare", cfg)
    problem = cfg.problem()
    fixed = dict(cfg.raw["fix_compare"]["fixed"] if fixed is None else fixed)
    unknown = [k for k in fixed if k not in problem.box.names]
    if unknown:
        raise ConfigurationError(f"unknown hyperparameter names {unknown}; "
                                 f"known: {list(problem.box.names)}")
    samples = None
    for stat in cfg.raw["statistics"]:
        a1 = cfg.algorithm1("mean" if stat == "map" else stat)
        if stat != "map" and samples is None:
            _, samples = sample_posterior(problem, a1)
        res = fix_and_compare(problem, a1, fixed, samples=samples, statistic=stat,
                              workers=cfg.workers)
        meta = {**run.meta, "statistic": stat}
        run.add(res.to_csv(run.out / f"fix_compare_{stat}.csv", meta))
        kde = _kde_table(res.full.values[res.full.ok], res.fixed.values[res.fixed.ok])
        if kde is not None:
            run.add(write_csv(run.out / f"fix_compare_{stat}_kde.csv",
                              ["x", "density_full", "density_fixed"], kde.tolist(), meta))
        run.summary[stat] = {"fixed": fixed, "ks_statistic": res.ks_statistic}
    return run


VERBS = {"run": cmd_run, "benchmark": cmd_benchmark, "convergence": cmd_convergence,
         "fix-compare": cmd_fix_compare}


def _parse_fix(items):
    out = {}
    errors = []
    for item in items or []:
        name, sep, val = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[name.strip()] = float(val)
        except ValueError:
            errors.append(f"--fix expects NAME=VALUE, got {item!r}")
    if errors:
        raise ConfigurationError("; ".join(errors))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="priorgsa",
                                 description="Prior-hyperparameter sensitivity analysis.")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="replaces every seed in the configuration")
        p.add_argument("--workers", type=int, help="worker threads for MAP solves")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "fix-compare":
            p.add_argument("--fix", action="append", metavar="NAME=VALUE",
                           help="freeze a hyperparameter (repeatable); overrides the config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config).with_overrides(args.seed, args.out, args.workers)
        if args.verb == "fix-compare":
            fixed = _parse_fix(args.fix) if args.fix is not None else None
            run = cmd_fix_compare(cfg, fixed)
        else:
            run = VERBS[args.verb](cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage '{exc.stage}' failed: {type(exc.cause).__name__}: {exc.cause}",
              file=sys.stderr)
        return 1
    except PriorGSAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = run.finish()
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
