"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to handle gets its own class;
everything derives from :class:`NemalignError` so a bare ``except
NemalignError`` catches any domain failure without swallowing programming
errors.
"""


class NemalignError(Exception):
    """Base class for all domain errors raised by this package."""


class NearZeroVector(NemalignError):
    """A vector with norm at or below the renormalization threshold."""


class DegenerateShape(NemalignError):
    """Particle shape with both semi-axes zero (anisotropy undefined)."""


class SingularSigma(NemalignError):
    """Overlap matrix is singular or too ill-conditioned to invert."""


class ScalePrefactorUndefined(NemalignError):
    """Potential prefactor divides by zero (rod limit with xi > 1/2)."""


class StepRejected(NemalignError):
    """An integration step produced an invalid state and was rejected."""


class EmptySystem(NemalignError):
    """An observable was requested for a system with no particles."""


class InvalidChi(NemalignError):
    """Anisotropy value outside the open interval required by the caller."""


class QuadratureFailure(NemalignError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class InsufficientNodes(NemalignError):
    """Too few usable nodes survived pruning to build an interpolant."""


class OutOfDomain(NemalignError):
    """Evaluation requested outside an interpolant's valid range."""


class SolverSingular(NemalignError):
    """A discretized linear operator is numerically singular."""


class DegenerateMoment(NemalignError):
    """A moment appearing in a denominator is numerically zero."""


class ShapeMismatch(NemalignError):
    """Tensor operands have incompatible shapes."""


class StencilOutOfDomain(NemalignError):
    """A finite-difference stencil point left the fields' domain."""


class ConfigError(NemalignError):
    """Invalid or inconsistent run configuration."""
