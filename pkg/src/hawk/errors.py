"""Exception hierarchy shared by every module."""


class HawkError(Exception):
    """Base class for all library errors."""


class ShapeError(HawkError, ValueError):
    pass


class BoundError(HawkError, ValueError):
    pass


class DegenerateRowError(HawkError, ValueError):
    pass


class ConfigError(HawkError, ValueError):
    pass


class ConsistencyError(HawkError, ValueError):
    pass


class EmptyTableError(HawkError, ValueError):
    pass


class WeightFileError(HawkError, ValueError):
    pass


class BenchmarkInvalidError(HawkError, RuntimeError):
    pass


class AblationError(HawkError, RuntimeError):
    """An evaluation cell failed; carries the (head, dataset) that broke."""

    def __init__(self, message, head=None, dataset=None):
        super().__init__(message)
        self.head = head
        self.dataset = dataset
