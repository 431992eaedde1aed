"""Exception types shared across the package."""


class EcoDriveError(Exception):
    """Base class for all package-specific errors."""


class InvalidBoundaryConditions(EcoDriveError, ValueError):
    """Boundary conditions violate their invariants (D <= 0, T <= 0, ...)."""


class InfeasibleConstraint(EcoDriveError):
    """A constraint margin cannot be evaluated (e.g. negative radicand)."""


class InfeasibleHorizon(EcoDriveError):
    """No horizon up to the cap makes the requested profile feasible."""


class TraceError(EcoDriveError, ValueError):
    """A trip trace violates its invariants or cannot be parsed."""


class ParamError(EcoDriveError, ValueError):
    """A vehicle parameter set or parameter file is invalid."""


class RouteError(EcoDriveError, ValueError):
    """A route or route file violates its invariants."""


class OffRouteError(EcoDriveError):
    """A point to be matched is farther than the off-route threshold."""


class ScenarioError(EcoDriveError, ValueError):
    """A simulation scenario or scenario file is invalid."""
