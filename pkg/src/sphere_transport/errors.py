"""Exception types raised by the geometry, field, transport and entropy layers."""


class SphereTransportError(Exception):
    """Base class for all package-specific errors."""


class CutLocusViolation(SphereTransportError):
    """A tangent vector or point pair reaches the antipodal cut locus."""


class BaseMismatch(SphereTransportError):
    """A tangent vector was supplied at a different base point than required."""


class DegenerateDistance(SphereTransportError):
    """Point pair too close or too far for a distance-based operator."""


class CoincidentPoints(SphereTransportError):
    """Two arguments coincide where a singular kernel is evaluated."""


class NonSmoothField(SphereTransportError):
    """A scalar field is not smooth enough for the requested derivative."""


class NotCConcave(SphereTransportError):
    """A potential failed the c-concavity certificate."""


class NotADensity(SphereTransportError):
    """Values are negative or do not integrate to one."""


class NotPositiveDefinite(SphereTransportError):
    """A symmetric operator has an eigenvalue at or below the floor."""


class NotSymmetric(SphereTransportError):
    """A matrix argument is not symmetric within tolerance."""


class SolverNotConverged(SphereTransportError):
    """An iterative solver hit its iteration cap before the tolerance."""


class SizeLimit(SphereTransportError):
    """Problem size exceeds the configured limit for an exact solver."""


class DimensionUnsupported(SphereTransportError):
    """Operation only available for specific sphere dimensions."""


class ConjugatePoint(SphereTransportError):
    """Geodesic reaches a conjugate point; the block solution degenerates."""


class KappaNonpositive(SphereTransportError):
    """Curvature-plus-Hessian lower bound is not strictly positive."""


class DomainError(SphereTransportError):
    """Scalar argument outside the domain of a special function."""
