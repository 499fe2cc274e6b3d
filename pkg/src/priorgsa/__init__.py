"""
Global sensitivity analysis of Bayesian inverse problems with respect to
prior hyperparameters.

One MCMC run under a wide Gaussian prior is reweighted by importance
sampling to evaluate posterior statistics at any hyperparameter setting;
polynomial chaos and sparse-weight ELM surrogates of those maps give
Sobol' indices in closed form.
"""
from .exceptions import (ConfigurationError, DegenerateWeightsError, DesignTooSmallError,
                         DomainError, EvaluationError, NegativeVarianceError,
                         OptimizationError, PriorGSAError, StageError)
from .gsa import (Algorithm1Config, GSAResult, SurrogateSettings, convergence_study,
                  fix_and_compare, pick_freeze_sobol, run_algorithm1, run_map_gsa,
                  sample_posterior)
from .hsmaps import (HSMapEvaluations, MapSolverConfig, eval_F_map, eval_F_mean, eval_F_var,
                     eval_is_map_over_design, eval_map_over_design, solve_map)
from .importance import (ESSProfile, ISWeightVector, PosteriorSampleSet,
                         effective_sample_size, ess_profile, is_moment, is_standard_error,
                         is_weights)
from .problem import (ForwardModel, GaussianNoiseModel, GaussianPrior, GaussianPriorFamily,
                      HyperparameterBox, InverseProblem)
from .sampling import DRAMConfig, MCMCChain, dram_sample, lhs_sample
from .surrogates import (PCESurrogate, SobolIndexReport, SWELMSurrogate, fit_pce, fit_swelm,
                         pce_sobol, swelm_sobol)

__version__ = "0.1.0"
