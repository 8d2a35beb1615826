"""Exception types shared across the package."""


class NotifRLError(Exception):
    """Base class for package errors."""


class InvalidParameterError(NotifRLError, ValueError):
    """A scalar parameter is outside its allowed range."""


class InvalidInputError(NotifRLError, ValueError):
    """Input data is empty or malformed."""


class PropensityError(NotifRLError, ValueError):
    """Logged propensities cannot support importance weighting."""


class IllegalStateError(NotifRLError, RuntimeError):
    """An operation was called in a state that does not allow it."""


class DivergenceError(NotifRLError, RuntimeError):
    """Training produced a non-finite loss.

    The partial loss curve is kept on ``loss_curve`` so callers can report it.
    """

    def __init__(self, message, loss_curve=()):
        super().__init__(message)
        self.loss_curve = list(loss_curve)
