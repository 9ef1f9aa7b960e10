"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config errors -> 2, data errors -> 3,
numeric failures -> 4.
"""


class ModegraphError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ModegraphError, ValueError):
    """Input data violates a documented precondition."""


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but degenerate (e.g. zero variance)."""


class ConfigError(ModegraphError, ValueError):
    """A configuration value is out of range or inconsistent."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericFailure(ModegraphError, ArithmeticError):
    """A computation produced non-finite values."""

    def __init__(self, message, iteration=None, layer=None, mode=None, parameter=None):
        self.iteration = iteration
        self.layer = layer
        self.mode = mode
        self.parameter = parameter
        super().__init__(message)


class TrainingFailure(NumericFailure):
    """Training diverged (loss became NaN or infinite)."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message, iteration=epoch)
