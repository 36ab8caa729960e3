"""Exception types shared across the package."""


class AssumptionViolation(Exception):
    """A problem instance fails one of the standing structural assumptions.

    Carries enough context (epoch, block, witness point) to locate the
    violation in a report.
    """

    def __init__(self, message, epoch=None, block=None, witness=None):
        super().__init__(message)
        self.epoch = epoch
        self.block = block
        self.witness = witness


class PartitionMismatch(ValueError):
    """Two partitioned objects do not share the same block structure."""


class InvalidStepsize(ValueError):
    """Stepsize yields a contraction factor outside (0, 1)."""


class ConvergenceFailure(RuntimeError):
    """An iterative oracle hit its iteration cap before reaching tolerance."""


class SolverFailure(RuntimeError):
    """The cycle planner's solver did not converge.

    ``residual`` holds the last fixed-point residual for diagnostics.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleBudget(ValueError):
    """No dual bracket exists for the requested cycle budget."""


class ConfigError(ValueError):
    """Experiment configuration is malformed or violates its schema."""
