"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument lies outside the admissible range of an operation."""


class ReachError(ParameterError):
    """A target volume cannot be reached by the requested obstacle family."""


class ConstructionError(RuntimeError):
    """A geometric object could not be built at the requested resolution."""


class ResourceError(MemoryError):
    """A mesh would exceed the vertex budget."""


class AssemblyError(RuntimeError):
    """Finite-element assembly met a degenerate element."""


class NumericError(ArithmeticError):
    """A linear or eigen solve failed or produced non-finite values."""


class NonConvergenceError(NumericError):
    """An iteration hit its cap before meeting its tolerance."""


class UndefinedRatioError(ZeroDivisionError):
    """A ratio with a vanishing denominator was requested."""


class SearchError(RuntimeError):
    """Every candidate of an optimization pass failed."""


class ConfigError(ValueError):
    """A malformed experiment configuration."""
