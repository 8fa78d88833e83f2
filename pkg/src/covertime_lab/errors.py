"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by covertime_lab."""


class InvalidParametersError(LabError, ValueError):
    """Parameters that make a construction degenerate or meaningless."""

    def __init__(self, message: str, **computed):
        self.computed = computed
        if computed:
            details = ", ".join(f"{k}={v!r}" for k, v in computed.items())
            message = f"{message} ({details})"
        super().__init__(message)


class InvalidSizeError(InvalidParametersError):
    pass


class NotFoundError(LabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class DomainError(LabError, ValueError):
    """Argument outside the domain where a formula is defined."""


class NumericalFailure(LabError, RuntimeError):
    pass


class EmptySampleError(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class OutputError(LabError, OSError):
    """Results could not be written; the message says what was saved."""
