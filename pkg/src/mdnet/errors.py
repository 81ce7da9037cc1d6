"""Exception types raised across the package."""


class MDNetError(Exception):
    """Base class for all package errors."""


class MalformedFile(MDNetError, ValueError):
    pass


class InvalidLabels(MDNetError, ValueError):
    pass


class NestingViolation(MDNetError, ValueError):
    pass


class InvalidShape(MDNetError, ValueError):
    pass


class IndivisibleShape(InvalidShape):
    pass


class ShapeMismatch(MDNetError, ValueError):
    pass


class InvalidReduction(MDNetError, ValueError):
    pass


class EpochOutOfRange(MDNetError, ValueError):
    pass


class TooFewCases(MDNetError, ValueError):
    pass


class EmptyEnsemble(MDNetError, ValueError):
    pass


class OutOfRangeProbability(MDNetError, ValueError):
    pass


class VolumeIOError(MDNetError, OSError):
    pass


class DivergedLoss(MDNetError, RuntimeError):
    """Training produced a non-finite loss.

    ``checkpoint`` holds the path of the last finite state, if one was written.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
