"""Exception hierarchy shared by every quatkrylov module."""


class QuatKrylovError(Exception):
    """Base class for all package errors."""


class DimensionError(QuatKrylovError, ValueError):
    pass


class DivisionByZero(QuatKrylovError, ZeroDivisionError):
    pass


class StructureError(QuatKrylovError, ValueError):
    """A real matrix does not have the quaternion block sign pattern."""


class InvalidParameter(QuatKrylovError, ValueError):
    pass


class PreconditionerError(QuatKrylovError, ArithmeticError):
    pass


class FormatError(QuatKrylovError, ValueError):
    """Malformed or unsupported Matrix Market input."""


class VersionError(QuatKrylovError, ValueError):
    pass
