"""Exception hierarchy shared by all collapsim modules."""


class CollapsimError(Exception):
    """Base class for all collapsim errors."""


class InvalidParameterError(CollapsimError, ValueError):
    """A parameter violates its documented precondition."""


class GridTooSmallError(CollapsimError, ValueError):
    """The spatial window does not contain the state to the required tolerance."""


class DegenerateStateError(CollapsimError, ValueError):
    """Operation on a numerically vanishing state."""


class StepTooLargeError(CollapsimError, ValueError):
    """A time step violates a stability or overflow bound."""


class GridMismatchError(CollapsimError, ValueError):
    """Two states or operators live on different grids."""


class ScheduleMismatchError(CollapsimError, KeyError):
    """A requested time is not part of the recorded sample schedule."""


class ConfigError(CollapsimError, ValueError):
    """A run configuration is malformed or inconsistent."""


class ArchiveError(CollapsimError, ValueError):
    """A trajectory archive is corrupt or does not match its config."""
