"""Exception types raised across the package."""


class MsdsError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MsdsError, ValueError):
    pass


class EllipticityError(MsdsError):
    """A coefficient sample is not strictly positive."""

    def __init__(self, message, min_value=None):
        super().__init__(message)
        self.min_value = min_value


class SolverError(MsdsError):
    """A linear solve broke down or missed its residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleConstraintError(MsdsError):
    """The measurement constraints of a patch problem are rank deficient."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class BasisFormatError(MsdsError):
    """A basis file is malformed, truncated or does not match the request."""


class ConfigError(MsdsError):
    pass
