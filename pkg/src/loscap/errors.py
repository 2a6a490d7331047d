"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """An argument is outside the documented domain of an operation."""


class SingularityError(InvalidArgument):
    """Two nodes coincide, so the far-field channel model is undefined."""


class PreconditionError(InvalidArgument):
    """A geometric precondition of an operation does not hold."""
