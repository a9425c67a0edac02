"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class ParseError(ValueError):
    """Raised when an input file cannot be parsed."""


class CheckpointError(ValueError):
    """Raised when a checkpoint document is malformed or inconsistent."""
