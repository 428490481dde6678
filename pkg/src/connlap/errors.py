"""Exception hierarchy.

Validation problems (bad input, unsupported requests) derive from
:class:`ValidationError`; failures of a numerical procedure on valid input
derive from :class:`NumericalError`. The CLI maps the two families to exit
codes 1 and 2.
"""


class ConnlapError(Exception):
    """Base class for all package errors."""


class ValidationError(ConnlapError, ValueError):
    pass


class NumericalError(ConnlapError, ArithmeticError):
    pass


class OffManifoldError(ValidationError):
    pass


class ChartSingularityError(ValidationError):
    pass


class NoClosedFormError(ValidationError, NotImplementedError):
    """The model has no closed-form expression for the requested quantity."""


class InsufficientNeighborsError(ValidationError):
    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class DegenerateAlignmentError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class FormatError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
