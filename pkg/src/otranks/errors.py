"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed or inconsistent input (shapes, values, file contents)."""


class DegenerateInputError(InvalidInputError):
    """Input hits a probability-zero configuration the method cannot resolve."""


class NumericalError(ArithmeticError):
    """A numerical routine failed, e.g. an ill-conditioned covariance."""
