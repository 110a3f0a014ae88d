"""Exception types raised across the package."""


class LegradError(Exception):
    """Base class for all package errors."""


class InvalidModelError(LegradError, ValueError):
    pass


class InvalidAssignmentError(LegradError, ValueError):
    pass


class DegenerateConditionalError(LegradError, ValueError):
    def __init__(self, node):
        super().__init__(f"conditional weights of factor {node} are all zero")
        self.node = node


class UnsupportedStructureError(LegradError, ValueError):
    pass


class UnsupportedFamilyError(LegradError, ValueError):
    pass


class StateSpaceTooLargeError(LegradError, ValueError):
    pass


class NonFiniteValueError(LegradError, FloatingPointError):
    pass


class DivergenceError(LegradError, FloatingPointError):
    """Raised when an optimization step produces a non-finite gradient."""

    def __init__(self, iteration, parameter):
        super().__init__(
            f"non-finite gradient at iteration {iteration}, parameter {parameter}"
        )
        self.iteration = iteration
        self.parameter = parameter


class ConfigError(LegradError, ValueError):
    pass
