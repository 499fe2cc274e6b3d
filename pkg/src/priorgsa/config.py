"""
Run configuration: one strict JSON document per run.

Unknown keys are errors and validation reports every violation at once.
A configuration resolves to an :class:`~priorgsa.problem.InverseProblem`
plus the pipeline settings needed by each CLI verb.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .gsa import SURROGATE_KINDS, Algorithm1Config, SurrogateSettings
from .hsmaps import KINDS, MapSolverConfig
from .io import config_hash, read_json, read_numeric_csv
from .problem import (ForwardModel, GaussianNoiseModel, GaussianPrior, GaussianPriorFamily,
                      HyperparameterBox, InverseProblem)
from .sampling import DRAMConfig
from .surrogates.swelm import P_GRID

VERSION = 1
PROBLEMS = ("linear", "seir", "external")

# allowed keys and defaults; ``None`` marks "problem-specific default"
DEFAULTS = {
    "version": VERSION,
    "name": "run",
    "problem": "linear",
    "external": None,
    "data_csv": None,
    "statistics": ["mean", "var"],
    "box": None,
    "is_prior": None,
    "dram": {"n_samples": 10_000, "burn_in": 1_000, "n_stages": 2, "dr_scale": 0.2,
             "adapt_start": 1_000, "adapt_interval": 100, "proposal_scale": 0.01},
    "design": {"N": 1_000},
    "surrogates": {"kinds": list(SURROGATE_KINDS), "pce_degree": 5, "cv_folds": 10,
                   "penalty_grid": None, "p_grid": list(P_GRID), "validation_fraction": 0.2},
    "map_solver": {"n_restarts": 3, "max_iter": 200},
    "seeds": {"mcmc": 0, "design": 0, "surrogate": 0, "benchmark": 0, "map": 0},
    "benchmark": {"N_mc": 100_000},
    "convergence": {"schedule": None},
    "fix_compare": {"fixed": {}},
    "output": {"dir": "results"},
    "workers": None,
}
EXTERNAL_KEYS = {"matrix", "data", "noise_std", "noise_cov", "theta_names", "hyper_names",
                 "mean_index", "var_index", "fixed_mean", "fixed_var", "qoi", "box", "is_prior"}
QOI_TYPES = ("sum_of_squares", "linear")


def _merge(defaults, given, path, errors):
    """Overlay ``given`` on ``defaults``; unknown keys are recorded as errors."""
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            errors.append(f"unknown key '{where}'")
            continue
        if isinstance(defaults[key], dict) and key not in ("fix_compare",):
            if not isinstance(val, dict):
                errors.append(f"'{where}' must be an object")
                continue
            out[key] = _merge(defaults[key], val, where, errors)
        elif key == "fix_compare":
            if not isinstance(val, dict):
                errors.append(f"'{where}' must be an object")
                continue
            extra = set(val) - {"fixed"}
            errors.extend(f"unknown key '{where}.{k}'" for k in sorted(extra))
            out[key] = {"fixed": dict(val.get("fixed", {}))}
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the fully merged JSON document."""

    raw: dict
    source: str = ""

    @classmethod
    def from_dict(cls, doc: dict, source: str = "", base_dir=None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("configuration must be a JSON object")
        errors = []
        raw = _merge(DEFAULTS, doc, "", errors)
        if "version" not in doc:
            errors.append("missing required key 'version'")
        cfg = cls(raw=raw, source=source)
        cfg._base = Path(base_dir) if base_dir else Path.cwd()
        errors.extend(cfg.violations())
        if not errors:
            errors.extend(cfg._build_violations())
        if errors:
            raise ConfigurationError("invalid configuration:\n  - " + "\n  - ".join(errors))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = read_json(path)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(doc, source=str(path), base_dir=path.parent)

    # ----------------------------------------------------------------- checks
    def violations(self) -> list:
        r = self.raw
        out = []
        if r["version"] != VERSION:
            out.append(f"version must be {VERSION}, got {r['version']!r}")
        if r["problem"] not in PROBLEMS:
            out.append(f"problem must be one of {list(PROBLEMS)}, got {r['problem']!r}")
        elif r["problem"] == "external":
            out.extend(self._external_violations())
        elif r["external"] is not None:
            out.append("'external' is only allowed with problem 'external'")
        stats = r["statistics"]
        if not isinstance(stats, list) or not stats:
            out.append("statistics must be a non-empty list")
        else:
            bad = [s for s in stats if s not in KINDS]
            if bad:
                out.append(f"unknown statistics {bad}; choose from {list(KINDS)}")
        out.extend(self._box_violations())
        out.extend(self._is_prior_violations())
        d = r["dram"]
        for key in ("n_samples", "burn_in", "n_stages", "adapt_start", "adapt_interval"):
            if not _is_int(d[key]):
                out.append(f"dram.{key} must be an integer")
        if _is_int(d["n_samples"]) and d["n_samples"] < 1:
            out.append("dram.n_samples must be >= 1")
        if not (_is_num(d["dr_scale"]) and 0 < d["dr_scale"] < 1):
            out.append("dram.dr_scale must lie in (0, 1)")
        if not (_is_num(d["proposal_scale"]) and d["proposal_scale"] > 0):
            out.append("dram.proposal_scale must be positive")
        N = r["design"]["N"]
        if not (_is_int(N) and N >= 1):
            out.append(f"design.N must be an integer >= 1, got {N!r}")
        s = r["surrogates"]
        try:
            SurrogateSettings(kinds=tuple(s["kinds"]), pce_degree=s["pce_degree"],
                              cv_folds=s["cv_folds"], penalty_grid=s["penalty_grid"],
                              p_grid=tuple(s["p_grid"]),
                              validation_fraction=s["validation_fraction"])
        except (ConfigurationError, TypeError) as exc:
            out.extend(f"surrogates: {m}" for m in str(exc).split("; "))
        for key, val in r["seeds"].items():
            if not _is_int(val) or val < 0:
                out.append(f"seeds.{key} must be a non-negative integer")
        n_mc = r["benchmark"]["N_mc"]
        if not (_is_int(n_mc) and n_mc >= 2):
            out.append(f"benchmark.N_mc must be an integer >= 2, got {n_mc!r}")
        sched = r["convergence"]["schedule"]
        if sched is not None:
            if not (isinstance(sched, list) and sched and all(_is_int(m) for m in sched)):
                out.append("convergence.schedule must be a non-empty list of integers")
            elif any(b <= a for a, b in zip(sched, sched[1:])):
                out.append("convergence.schedule must be strictly increasing")
            elif sched[0] < 1 or (_is_int(d["n_samples"]) and sched[-1] > d["n_samples"]):
                out.append(f"convergence.schedule must lie in [1, dram.n_samples]")
        names = self._names()
        if names is not None:
            for key, val in r["fix_compare"]["fixed"].items():
                if key not in names:
                    out.append(f"fix_compare.fixed: unknown hyperparameter '{key}'")
                elif not _is_num(val):
                    out.append(f"fix_compare.fixed.{key} must be a number")
        w = r["workers"]
        if w is not None and not (_is_int(w) and w >= 1):
            out.append("workers must be a positive integer")
        return out

    def _build_violations(self) -> list:
        try:
            problem = self.problem()
            prior = self.is_prior()
        except (ConfigurationError, DomainError, ValueError, OSError) as exc:
            return [f"problem definition: {exc}"]
        if prior.dim != problem.forward.n_theta:
            return [f"is_prior has {prior.dim} entries but the problem has "
                    f"{problem.forward.n_theta} parameters"]
        return []

    def _names(self):
        p = self.raw["problem"]
        if p == "linear":
            from .benchmarks.linear import XI_NAMES
            return XI_NAMES
        if p == "seir":
            from .benchmarks.seir import XI_NAMES
            return XI_NAMES
        ext = self.raw["external"]
        if not isinstance(ext, dict):
            return None
        n = _hyper_dim(ext)
        return tuple(ext.get("hyper_names") or [f"xi{j + 1}" for j in range(n)])

    def _box_violations(self) -> list:
        box = self.raw["box"]
        if box is None:
            return []
        out = []
        if not isinstance(box, dict) or set(box) - {"lower", "upper"}:
            return ["box must be an object with keys 'lower' and 'upper'"]
        lo, hi = np.asarray(box.get("lower", []), float), np.asarray(box.get("upper", []), float)
        names = self._names() or ()
        if lo.shape != hi.shape or lo.size != len(names):
            return [f"box.lower and box.upper need {len(names)} entries each"]
        for j in range(lo.size):
            if not lo[j] < hi[j]:
                out.append(f"box: lower < upper violated for {names[j]} "
                           f"({lo[j]:g} >= {hi[j]:g})")
        return out

    def _is_prior_violations(self) -> list:
        isp = self.raw["is_prior"]
        if isp is None:
            if self.raw["problem"] == "external" and not (self.raw["external"] or {}).get("is_prior"):
                return ["is_prior is required for external problems"]
            return []
        if not isinstance(isp, dict) or set(isp) != {"mean", "var"}:
            return ["is_prior must be an object with keys 'mean' and 'var'"]
        m, v = np.asarray(isp["mean"], float), np.asarray(isp["var"], float)
        out = []
        if m.shape != v.shape or m.ndim != 1:
            out.append("is_prior.mean and is_prior.var must be vectors of equal length")
        elif np.any(v <= 0):
            out.append("is_prior.var entries must be positive")
        return out

    def _external_violations(self) -> list:
        ext = self.raw["external"]
        if not isinstance(ext, dict):
            return ["problem 'external' needs an 'external' object"]
        out = [f"unknown key 'external.{k}'" for k in sorted(set(ext) - EXTERNAL_KEYS)]
        for key in ("matrix", "data", "mean_index", "var_index", "box"):
            if key not in ext:
                out.append(f"external.{key} is required")
        if out:
            return out
        A = np.asarray(ext["matrix"], float)
        d = np.asarray(ext["data"], float)
        if A.ndim != 2 or A.shape[0] != d.size:
            out.append("external.matrix rows must match the data length")
            return out
        n_theta = A.shape[1]
        if ("noise_std" in ext) == ("noise_cov" in ext):
            out.append("exactly one of external.noise_std and external.noise_cov is required")
        mi, vi = ext["mean_index"], ext["var_index"]
        if len(mi) != n_theta or len(vi) != n_theta:
            out.append(f"external.mean_index and var_index need {n_theta} entries")
            return out
        n_xi = _hyper_dim(ext)
        used = [j for j in list(mi) + list(vi) if j is not None]
        for j in range(n_xi):
            if used.count(j) != 1:
                out.append(f"hyperparameter {j} must map to exactly one prior slot "
                           f"(used {used.count(j)} times)")
        for slot, idx, fixed_key in (("mean", mi, "fixed_mean"), ("var", vi, "fixed_var")):
            fixed = ext.get(fixed_key)
            for i, j in enumerate(idx):
                if j is None and (fixed is None or fixed[i] is None):
                    out.append(f"prior {slot} of parameter {i} has neither a hyperparameter "
                               f"nor a value in external.{fixed_key}")
        q = ext.get("qoi", {"type": "sum_of_squares"})
        if not isinstance(q, dict) or q.get("type") not in QOI_TYPES:
            out.append(f"external.qoi.type must be one of {list(QOI_TYPES)}")
        elif q["type"] == "linear" and len(q.get("weights", [])) != n_theta:
            out.append(f"external.qoi.weights needs {n_theta} entries")
        box = ext["box"]
        try:
            HyperparameterBox(np.asarray(box["lower"], float), np.asarray(box["upper"], float),
                              tuple(ext.get("hyper_names") or ()))
        except (DomainError, ValueError, KeyError, TypeError) as exc:
            out.append(f"external.box: {exc}")
        return out

    # --------------------------------------------------------------- products
    @property
    def hash(self) -> str:
        """Digest of everything that can change the numbers (not output dir or workers)."""
        raw = {k: v for k, v in self.raw.items() if k not in ("output", "workers")}
        return config_hash(raw)

    @property
    def seeds(self) -> dict:
        return dict(self.raw["seeds"])

    @property
    def workers(self) -> int:
        return int(self.raw["workers"] or os.cpu_count() or 1)

    def with_overrides(self, seed=None, out_dir=None, workers=None) -> "RunConfig":
        """Copy with CLI overrides applied; ``seed`` replaces every seed."""
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seeds"] = {k: int(seed) for k in raw["seeds"]}
        if out_dir is not None:
            raw["output"]["dir"] = str(out_dir)
        if workers is not None:
            raw["workers"] = int(workers)
        return RunConfig.from_dict(raw, self.source, getattr(self, "_base", None))

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self._base / p

    def problem(self) -> InverseProblem:
        r = self.raw
        data = None
        if r["data_csv"] is not None:
            data = read_numeric_csv(self._path(r["data_csv"]))[2]
        if r["problem"] == "linear":
            from .benchmarks.linear import linear_box, linear_problem
            box = self._box(linear_box())
            return linear_problem(None if data is None else data[:, 1], box)
        if r["problem"] == "seir":
            from .benchmarks.seir import seir_box, seir_problem
            return seir_problem(data, box=self._box(seir_box()))
        return _external_problem(r["external"], data)

    def _box(self, default: HyperparameterBox) -> HyperparameterBox:
        box = self.raw["box"]
        if box is None:
            return default
        return HyperparameterBox(np.asarray(box["lower"], float), np.asarray(box["upper"], float),
                                 default.names)

    def is_prior(self) -> GaussianPrior:
        r = self.raw
        isp = r["is_prior"]
        if isp is None and r["problem"] == "external":
            isp = r["external"]["is_prior"]
        if isp is not None:
            return GaussianPrior(np.asarray(isp["mean"], float), np.asarray(isp["var"], float))
        if r["problem"] == "linear":
            from .benchmarks.linear import IS_PRIOR
        else:
            from .benchmarks.seir import IS_PRIOR
        return IS_PRIOR

    def dram(self) -> DRAMConfig:
        d = self.raw["dram"]
        isp = self.is_prior()
        return DRAMConfig(proposal_cov=d["proposal_scale"] * np.diag(isp.var),
                          n_samples=d["n_samples"], burn_in=d["burn_in"],
                          n_stages=d["n_stages"], dr_scale=d["dr_scale"],
                          adapt_start=d["adapt_start"], adapt_interval=d["adapt_interval"],
                          seed=self.seeds["mcmc"])

    def surrogate_settings(self) -> SurrogateSettings:
        s = self.raw["surrogates"]
        return SurrogateSettings(kinds=tuple(s["kinds"]), pce_degree=s["pce_degree"],
                                 cv_folds=s["cv_folds"], penalty_grid=s["penalty_grid"],
                                 p_grid=tuple(s["p_grid"]),
                                 validation_fraction=s["validation_fraction"],
                                 seed=self.seeds["surrogate"])

    def map_solver(self) -> MapSolverConfig:
        m = self.raw["map_solver"]
        return MapSolverConfig(max_iter=m["max_iter"], n_restarts=m["n_restarts"],
                               seed=self.seeds["map"])

    def algorithm1(self, statistic: str) -> Algorithm1Config:
        sched = self.raw["convergence"]["schedule"] or ()
        return Algorithm1Config(statistic=statistic, N=self.raw["design"]["N"], dram=self.dram(),
                                is_prior=self.is_prior(), surrogates=self.surrogate_settings(),
                                design_seed=self.seeds["design"], schedule=tuple(sched),
                                map_solver=self.map_solver())


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def _hyper_dim(ext: dict) -> int:
    idx = [j for j in list(ext.get("mean_index", [])) + list(ext.get("var_index", []))
           if j is not None]
    return max(idx) + 1 if idx else 0


def _external_problem(ext: dict, data=None) -> InverseProblem:
    """Linear-Gaussian problem described entirely by a JSON fragment."""
    A = np.asarray(ext["matrix"], float)
    d = np.asarray(ext["data"], float) if data is None else np.asarray(data, float)[:, -1]
    if "noise_std" in ext:
        noise = GaussianNoiseModel.iid(d, float(ext["noise_std"]))
    else:
        noise = GaussianNoiseModel(d, np.asarray(ext["noise_cov"], float))
    names = tuple(ext.get("hyper_names") or ())
    box = HyperparameterBox(np.asarray(ext["box"]["lower"], float),
                            np.asarray(ext["box"]["upper"], float), names)
    family = GaussianPriorFamily(box, ext["mean_index"], ext["var_index"],
                                 fixed_mean=ext.get("fixed_mean"), fixed_var=ext.get("fixed_var"))
    q = ext.get("qoi", {"type": "sum_of_squares"})
    if q["type"] == "linear":
        w = np.asarray(q["weights"], float)

        def qoi(theta):
            out = np.asarray(theta, float) @ w
            return out if np.ndim(out) else float(out)
    else:
        from .benchmarks.linear import quadratic_qoi as qoi
    return InverseProblem(forward=ForwardModel.linear(A), noise=noise, prior_family=family,
                          qoi=qoi, name="external",
                          theta_names=tuple(ext.get("theta_names") or ()))
