"""Exception hierarchy shared by all modules."""


class QleakError(Exception):
    """Base class for errors raised by qleak."""


class ChannelError(QleakError, ValueError):
    """Malformed channel, game or strategy input."""


class InvalidStrategy(QleakError, ValueError):
    """A strategy violates one of its structural invariants."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class BudgetExceeded(QleakError, RuntimeError):
    """An enumeration would exceed the configured budget."""


class SolverError(QleakError, RuntimeError):
    """An LP/SDP solve failed, stalled, or returned an unusable status."""

    def __init__(self, message, status=None, residuals=None):
        super().__init__(message)
        self.status = status
        self.residuals = residuals or {}
