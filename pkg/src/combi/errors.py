class CombiError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(CombiError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidState(CombiError, RuntimeError):
    """An object is not in a state where the operation makes sense."""
