"""Exception hierarchy shared by all qphase modules."""


class QPhaseError(Exception):
    """Base class for errors raised by qphase."""


class InvalidDimensionError(QPhaseError, ValueError):
    """Operator or state dimensions are invalid or do not match."""


class InvalidParameterError(QPhaseError, ValueError):
    """A model or numerical parameter is outside its allowed range."""


class InvalidStateError(QPhaseError, ValueError):
    """A ket or density operator violates its invariants."""


class NumericalError(QPhaseError, RuntimeError):
    """A numerical procedure failed (divergence, drift, non-convergence)."""


class StabilityError(NumericalError):
    """Fixed-step integration became unstable."""


class DivergenceError(NumericalError):
    """A trajectory produced NaN or overflow values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoCycleError(NumericalError):
    """The deterministic dynamics relaxed to a fixed point."""


class PeriodNotFoundError(NumericalError):
    """No return of the trajectory close enough to define a period."""


class NotConvergedError(NumericalError):
    """A state did not converge onto the limit cycle.

    ``indices`` lists the offending flat batch positions when known.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)
