"""Exception hierarchy shared by all modules.

Every error carries the name of the module that raised it so the CLI can
report ``<module>: <message>`` without guessing.
"""


class QCILabError(Exception):
    module = "qci_lab"

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


# geometry
class GeometryError(QCILabError):
    module = "geometry"


class EvaluationError(GeometryError, ValueError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class BracketingError(GeometryError):
    pass


class PoleError(GeometryError, ValueError):
    pass


# dynamics
class DynamicsError(QCILabError):
    module = "dynamics"


class NonReturnError(DynamicsError):
    pass


# momentmap
class MomentMapError(QCILabError):
    module = "momentmap"


class PrincipalTypeError(MomentMapError):
    pass


class LiouvilleConditionError(MomentMapError, ValueError):
    pass


class ParameterError(MomentMapError, ValueError):
    pass


class SolveError(MomentMapError):
    pass


class ResolutionError(QCILabError):
    """Grid too coarse for the requested check (momentmap or quasimode)."""

    def __init__(self, message, module="momentmap", required=None):
        super().__init__(message)
        self.module = module
        self.required = required


# spectral
class SpectralError(QCILabError):
    module = "spectral"


class GridRefinementError(SpectralError):
    def __init__(self, message, suggested_n=None):
        super().__init__(message)
        self.suggested_n = suggested_n


class NumericError(SpectralError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DomainError(SpectralError, ValueError):
    pass


# quasimode
class QuasimodeError(QCILabError):
    module = "quasimode"


class CapViolationError(QuasimodeError, ValueError):
    pass


class NoUnitEquatorError(QuasimodeError, ValueError):
    pass


# lattice
class LatticeError(QCILabError):
    module = "lattice"


class SpecError(LatticeError, ValueError):
    pass


class SizeError(LatticeError, ValueError):
    pass


class DegenerateSeriesError(LatticeError):
    pass


# cli
class ConfigError(QCILabError, ValueError):
    module = "cli"

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
