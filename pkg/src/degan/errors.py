"""Exception types shared across the package."""


class DeganError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(DeganError, ValueError):
    pass


class ConfigurationError(DeganError, ValueError):
    pass


class FormatError(DeganError, ValueError):
    pass


class NumericError(DeganError, ArithmeticError):
    pass


class DegeneratePointError(NumericError):
    """Raised when a point has zero neighbor distances in the MLE estimator.

    ``indices`` holds the offending point indices.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class TrainingError(NumericError):
    """A training loop hit a non-finite loss.

    ``checkpoint`` is the path of the last good checkpoint, or None.
    """

    def __init__(self, message, checkpoint=None, step=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.step = step
