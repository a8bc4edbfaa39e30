"""Domain exceptions shared across the toolkit."""


class ModelfluidError(Exception):
    """Base class for all domain errors raised by this package."""


class NoBracketError(ModelfluidError):
    """A scalar root is not bracketed inside the admissible interval."""


class NonConvergenceError(ModelfluidError):
    """An iterative solver exhausted its iteration budget."""


class VleFailureError(ModelfluidError):
    """A bubble- or dew-point computation failed on a column stage."""


class NegativeFlowError(ModelfluidError):
    """An internal column flow became negative (infeasible operating point)."""


class DegenerateFeaturesError(ModelfluidError):
    """Feature set cannot be mapped to parameters (e.g. equal boiling points)."""


class SingularJacobianError(ModelfluidError):
    """A Jacobian required by a sensitivity computation is singular."""


class InfeasibleError(ModelfluidError):
    """Optimization could not restore feasibility."""


class MaxIterationsError(ModelfluidError):
    """Optimizer hit its iteration limit before meeting the KKT tolerance."""


class ParseError(ModelfluidError):
    """An input file could not be parsed; carries row/column context."""


class ValidationError(ModelfluidError):
    """Parsed input violates a schema or consistency rule."""
