"""Exception hierarchy shared across the pipeline."""


class DashcrashError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DashcrashError):
    """An input file is malformed or violates a format invariant."""


class UsageError(DashcrashError):
    """The caller violated an API or CLI contract."""


class InvariantViolation(DashcrashError):
    """An internal consistency check failed; indicates a bug."""


class LaneEstimationError(DashcrashError):
    """Lane lines could not be recovered from the given frames."""
