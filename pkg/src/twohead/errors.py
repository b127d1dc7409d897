"""Exception taxonomy shared by all modules."""


class TwoHeadError(Exception):
    """Base class for all package errors."""


class ConfigError(TwoHeadError, ValueError):
    """Invalid configuration value (bad width, rate, split, ...)."""


class DimensionError(TwoHeadError, ValueError):
    """Operands have incompatible shapes."""


class NumericError(TwoHeadError, ValueError):
    """Non-finite values where finite ones are required."""


class DataError(TwoHeadError, ValueError):
    """Labels or samples violate the dataset contract."""


class UsageError(TwoHeadError, RuntimeError):
    """API called out of order (stale cache, empty batch, ...)."""


class NonFiniteLossError(TwoHeadError, ArithmeticError):
    """A training loss became NaN/Inf; carries the step and epoch."""

    def __init__(self, step: str, epoch: int, value: float):
        self.step = step
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value!r} in step {step} at epoch {epoch}")
