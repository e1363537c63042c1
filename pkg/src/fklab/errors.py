"""Shared exception types."""


class AssemblyError(RuntimeError):
    """Operator assembly produced an inconsistent matrix."""


class SolverError(RuntimeError):
    """Eigen solver failed to converge to the requested tolerance."""


class UnboundedInverseError(ValueError):
    """A generalized inverse could not be bracketed within the search range."""


class CriterionInapplicableError(RuntimeError):
    """The confining profile never reaches the level the rate function needs."""


class SlicingInapplicableError(CriterionInapplicableError):
    """The slicing series diverges; the slicing route gives no rate function."""


class GeometryError(ValueError):
    """Ball geometry violates the preconditions of the window-exit bound."""
