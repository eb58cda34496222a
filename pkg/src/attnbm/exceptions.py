"""Exception types raised across the package."""


class AttnBMError(Exception):
    """Base class for package errors."""


class UnsupportedBetaError(AttnBMError, ValueError):
    """An exact routine was asked to handle a non-integer inverse temperature."""


class BudgetExceededError(AttnBMError, MemoryError):
    """An enumeration (tuples, subsets) would exceed its configured size limit."""


class TrainingDivergedError(AttnBMError, FloatingPointError):
    """The training objective became non-finite."""


class FormatError(AttnBMError, ValueError):
    """A binary or text file does not match its expected layout.

    Parameters
    ----------
    message : str
        Human readable description.
    offset : int, optional
        Byte offset at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GridWarning(UserWarning):
    """A discretization grid truncates a non-negligible part of a density."""
