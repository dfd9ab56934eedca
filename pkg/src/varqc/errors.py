"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`VarQCError`
so callers (the CLI in particular) can separate configuration and geometry
problems from genuine bugs.
"""


class VarQCError(Exception):
    """Base class for all package errors."""


# geometry
class GeometryError(VarQCError):
    pass


class UnboundedPolytopeError(GeometryError):
    pass


class EmptyPolytopeError(GeometryError):
    pass


class DegeneratePolytopeError(GeometryError):
    pass


class DegenerateFaceError(GeometryError):
    pass


class AmbiguousOrientationError(GeometryError):
    pass


class NotOnBoundaryError(GeometryError):
    pass


# charts
class ChartError(VarQCError):
    pass


class SingularJacobianError(ChartError):
    pass


class UncoveredPointError(ChartError):
    pass


class ChartOverflowError(ChartError):
    pass


# regions and meshes
class EmptyRegionError(VarQCError):
    pass


class EpsTooLargeError(VarQCError):
    pass


class MeshFailureError(VarQCError):
    pass


class NonFiniteValueError(VarQCError):
    pass


# checks
class SolverDivergenceError(VarQCError):
    pass


class SupNormViolationError(VarQCError):
    pass


class NonConvergentError(VarQCError):
    pass


class CannotSeparateError(VarQCError):
    pass


class ConfigError(VarQCError):
    """Invalid run configuration; ``diagnostics`` lists ``(location, message)`` pairs."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        lines = [base] + [f"  {loc}: {msg}" for loc, msg in self.diagnostics]
        return "\n".join(lines)
