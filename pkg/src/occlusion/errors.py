"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run or experiment configuration."""


class InvalidStateError(ValueError):
    """A state or density value is outside the domain an operation accepts."""


class ConsistencyError(ValueError):
    """Structurally inconsistent inputs (e.g. pool entries in the wrong region)."""


class EnumerationLimitError(ValueError):
    """An exact enumeration was requested beyond its hard size guard."""


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""
