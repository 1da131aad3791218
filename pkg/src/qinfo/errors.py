"""Exception hierarchy.

``NumericalError`` subclasses signal a broken computation (CLI exit code 3);
``ConfigError`` signals bad user input (exit code 2).
"""


class QinfoError(Exception):
    pass


class ConfigError(QinfoError):
    pass


class NumericalError(QinfoError):
    pass


class DimensionMismatch(NumericalError, ValueError):
    pass


class NotPositiveSemidefinite(NumericalError):
    pass


class InvalidBlochVector(NumericalError, ValueError):
    pass


class InvalidState(NumericalError, ValueError):
    pass


class InvalidPovm(NumericalError, ValueError):
    pass


class NonDifferentiable(NumericalError):
    pass


class IllPosed(NumericalError):
    """The symmetric logarithmic derivative does not exist."""


class SingularFisher(NumericalError):
    """Fisher information is undefined: a zero-probability outcome carries information."""


class DegenerateScore(NumericalError):
    pass


class PoleDegeneracy(NumericalError):
    pass


class NearSingularCovariance(NumericalError):
    pass
