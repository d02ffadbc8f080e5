"""Exception types raised by the geometry engine."""


class GeometryError(Exception):
    """Base class for all errors raised by hilbert_geo."""


class DomainError(GeometryError, ValueError):
    """Input outside the domain of an operation (off-manifold point, wrong base point, ...)."""


class UnsupportedOperationError(GeometryError):
    """Operation not defined for this kind of model."""


class DegeneratePlaneError(DomainError):
    """Two vectors do not span a 2-plane."""


class ChartEscapeError(GeometryError):
    """A trajectory left the coordinate chart of a chart model."""


class BVPFailure(GeometryError):
    """Geodesic shooting did not converge from any restart."""


class ConfigError(GeometryError, ValueError):
    """Invalid scenario configuration."""
