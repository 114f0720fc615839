"""Exception hierarchy. Every error carries the CLI exit code it maps to."""

from typing import Optional


class CornerBIEError(Exception):
    exit_code = 1


class ConfigError(CornerBIEError):
    """Invalid input: configuration, geometry or boundary data."""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f'{field}: {message}' if field else message)


class NumericalError(CornerBIEError):
    """A tolerance, certification or factorization failed."""

    exit_code = 3


class ResourceCapError(CornerBIEError):
    """A configured size or depth cap was reached. `field` names the cap setting."""

    exit_code = 4

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f'{field}: {message}' if field else message)


# geometry
class GeometryError(ConfigError, ValueError):
    pass


class SelfIntersecting(GeometryError):
    pass


class DegenerateAngle(GeometryError):
    pass


class MeshInfeasible(GeometryError):
    pass


class AtCorner(GeometryError):
    pass


# kernels
class CoincidentPoints(NumericalError, ValueError):
    pass


# corner_basis
class RankDeficient(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


# quadrature
class UnsupportedOrder(ConfigError, ValueError):
    pass


class MaxDepthExceeded(NumericalError):
    pass


class ResidualTooLarge(NumericalError):
    pass


# assembly
class MissingTable(NumericalError):
    pass


class DimensionMismatch(NumericalError, ValueError):
    pass


# solve
class SingularMatrix(NumericalError):
    pass


class IncompatibleData(ConfigError, ValueError):
    pass


# corner_resolve
class IllConditionedU(NumericalError):
    pass


class MaxLevels(ResourceCapError):
    pass


# evaluate
class UnresolvedCorner(NumericalError):
    def __init__(self, message: str, corner_id: int, required_radius: float):
        self.corner_id = corner_id
        self.required_radius = required_radius
        super().__init__(message)


# reference
class TooLarge(ResourceCapError):
    pass
