"""Exception hierarchy shared by all modules."""


class NeedletError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(NeedletError, ValueError):
    """A parameter is outside its documented domain."""


class CapacityError(NeedletError):
    """A request exceeds a documented implementation limit."""


class DegenerateVarianceError(NeedletError, ArithmeticError):
    """A normalizing variance is zero, so the statistic is undefined."""


class DegenerateCellError(NeedletError):
    """A coarse Voronoi cell received no fine points."""


class ConfigError(InvalidArgumentError):
    """A configuration object is malformed."""
