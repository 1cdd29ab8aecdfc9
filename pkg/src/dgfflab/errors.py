"""Exception hierarchy shared by all modules."""


class DgffError(Exception):
    """Base class for library errors."""


class InvalidDomain(DgffError, ValueError):
    pass


class EmptyDiscretization(DgffError):
    pass


class EmptyInterior(DgffError):
    pass


class NoTriangles(DgffError):
    pass


class SingularSystem(DgffError):
    pass


class VertexOutsideDomain(DgffError, ValueError):
    pass


class PointOutsideDomain(DgffError, ValueError):
    pass


class MethodUnsupported(DgffError, ValueError):
    pass


class QuadratureUnconverged(DgffError):
    pass


class ParameterOutOfDisc(DgffError, ValueError):
    pass


class DenseLimitExceeded(DgffError):
    pass


class NotSubdomain(DgffError, ValueError):
    pass


class KernelNotPSD(DgffError):
    pass


class InsufficientSamples(DgffError, ValueError):
    pass


class InsufficientExceedances(DgffError):
    pass


class InsufficientReplicas(DgffError, ValueError):
    pass


class WindowEmpty(DgffError):
    pass


class DomainError(DgffError, ValueError):
    pass


class UnsupportedDomainShape(DgffError, ValueError):
    pass


class SeriesNotConverged(DgffError):
    pass


class GridMismatch(DgffError, ValueError):
    pass


class PartitionTooFine(DgffError):
    pass


class CovarianceNotOrdered(DgffError, ValueError):
    pass


class ConfigInvalid(DgffError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class IoError(DgffError, OSError):
    pass
