"""Exception hierarchy shared by every subsystem."""


class RdnnError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RdnnError, ValueError):
    pass


class ShapeError(RdnnError, ValueError):
    pass


class NotPSDError(RdnnError, ValueError):
    pass


class DegenerateWeightsError(RdnnError, ValueError):
    """Raised when a relation update is requested for all-zero weights."""


class UndefinedMetricError(RdnnError, ValueError):
    pass


class FormatError(RdnnError):
    """Malformed or truncated data file.

    Parameters
    ----------
    message : str
    offset : int, optional
        Byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(RdnnError, ArithmeticError):
    def __init__(self, epoch, value):
        super().__init__(f"training diverged at epoch {epoch}: objective = {value!r}")
        self.epoch = epoch
        self.value = value
