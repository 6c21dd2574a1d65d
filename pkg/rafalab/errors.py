class RafaError(Exception):
    """Base class of every error raised on purpose by rafalab."""


class ConfigurationError(RafaError):
    """A configuration or budget that can not be realized."""


class ContractViolation(RafaError):
    """Inputs that break the documented preconditions of an operation."""


class NumericalError(RafaError):
    """A factorization or solve failed, e.g. a precision matrix lost definiteness."""


class RunAborted(RafaError):
    """A run stopped before reaching its horizon.

    The partial record is attached so the failure can be diagnosed.
    """

    def __init__(self, message: str, step: int, record=None) -> None:
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.record = record
