"""Exception types raised across the package."""


class DPMError(Exception):
    """Base class for all package errors."""

    module = "dpm_latent"


class ConfigError(DPMError, ValueError):
    """Invalid input range, shape or configuration."""


class ScheduleError(ConfigError):
    module = "schedule"


class NumericalError(DPMError, ArithmeticError):
    """A computation produced a non-finite value.

    ``diagnostics`` carries a JSON-serializable payload (step index, magnitude, ...).
    """

    def __init__(self, message, module="dpm_latent", **diagnostics):
        super().__init__(message)
        self.module = module
        self.diagnostics = dict(diagnostics)


class ZeroSigmaError(ConfigError):
    """Residual extraction needs sigma_t > 0 at every encoded step."""

    module = "encoder"


class ScheduleMismatchError(ConfigError):
    module = "translation"


class NonConvergenceError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class StarvationError(DPMError, RuntimeError):
    module = "guidance"


class InvalidProbabilityError(ConfigError):
    module = "guidance"
