"""Exception hierarchy for the gac package."""


class GACError(Exception):
    """Base class for all errors raised by gac."""


class ShapeError(GACError, ValueError):
    """Input arrays have incompatible or invalid shapes."""


class DomainError(GACError, ValueError):
    """A scalar argument lies outside the domain of the operation."""


class SingularityError(GACError, ValueError):
    """A linear system is singular or not positive definite."""


class NormalizationError(GACError, ValueError):
    """A kernel diagonal entry or gradient norm is not strictly positive.

    Attributes
    ----------
    index : int or None
        Row index of the offending gradient / diagonal entry.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InsufficientSampleError(GACError, ValueError):
    """Fewer samples than required (GAC needs at least two)."""


class UndefinedTotalError(GACError, ValueError):
    """Total GAC is undefined because the loss never decreased."""


class UndefinedPredictionError(GACError, ValueError):
    """A kernel-smoother weight row sums to zero."""


class MissingMatrixError(GACError, ValueError):
    """A required smoother matrix was not supplied."""


class FormatError(GACError, ValueError):
    """A binary data file does not follow the expected format.

    Attributes
    ----------
    offset : int
        Byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDivergedError(GACError, RuntimeError):
    """Training produced a non-finite loss.

    The last finite :class:`~gac.complexity.TrainingTrace` is kept in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptyInputError(GACError, ValueError):
    """An input file or table has no usable rows."""
