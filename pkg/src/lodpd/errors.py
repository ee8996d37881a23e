"""Exception types raised across the package."""


class LodpdError(Exception):
    """Base class for package errors."""


class ParameterError(LodpdError, ValueError):
    """A model parameter lies outside its admissible domain."""


class LimitError(LodpdError, ValueError):
    """A configured size cap (partition size, chain size) was exceeded."""


class PrecisionError(LodpdError, ArithmeticError):
    """Requested accuracy cannot be reached at the available working precision.

    ``achieved`` carries the best error bound that could be certified.
    """

    def __init__(self, message, achieved=float("inf")):
        super().__init__(message)
        self.achieved = achieved


class IntegratorError(LodpdError, RuntimeError):
    """The ODE oracle failed to integrate."""


class SimulationError(LodpdError, RuntimeError):
    """Numerical blow-up in a path simulation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FitError(LodpdError, ValueError):
    """Too few usable points for a regression fit."""
