"""Exception hierarchy shared by every ocpg module."""


class OcpgError(Exception):
    """Base class for all errors raised by ocpg."""


class ConfigurationError(OcpgError, ValueError):
    """Invalid construction parameters (shapes, cost matrices, hyperparameters)."""


class ContractError(OcpgError, ValueError):
    """A call violated an operation's precondition (e.g. wrong vector length)."""


class UsageError(OcpgError, ValueError):
    """Operation invoked on data it cannot handle (empty buffer, short curve)."""


class TrainingDivergenceError(OcpgError, FloatingPointError):
    """Non-finite values appeared during training or gradient estimation."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class EstimationError(OcpgError, FloatingPointError):
    """A zeroth-order estimate received non-finite function values."""


class UnstablePolicyError(OcpgError, ArithmeticError):
    """Policy evaluation recurrence did not converge (closed loop unstable)."""


class VerificationFailure(OcpgError, AssertionError):
    """A numerical verification check failed; carries the offending report."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
