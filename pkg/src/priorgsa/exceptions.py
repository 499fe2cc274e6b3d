"""Exception hierarchy shared by all modules."""


class PriorGSAError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PriorGSAError, ValueError):
    """A hyperparameter vector lies outside its admissible box."""


class ConfigurationError(PriorGSAError, ValueError):
    """Invalid settings, or a sampler that cannot start."""


class EvaluationError(PriorGSAError, RuntimeError):
    """The forward model failed to evaluate at a parameter vector."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class DegenerateWeightsError(PriorGSAError, FloatingPointError):
    """Importance weights are not usable (non-finite or all zero)."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class NegativeVarianceError(PriorGSAError, ArithmeticError):
    """A variance estimate is negative beyond round-off."""


class OptimizationError(PriorGSAError, RuntimeError):
    """No optimizer start converged. The best value found is attached."""

    def __init__(self, message, best_value=None, best_theta=None):
        super().__init__(message)
        self.best_value = best_value
        self.best_theta = best_theta


class DesignTooSmallError(PriorGSAError, ValueError):
    """Too few training points to fit a surrogate."""


class StageError(PriorGSAError):
    """Wraps an error raised inside a pipeline stage, recording the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
