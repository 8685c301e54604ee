"""Exception hierarchy for the package."""


class MgdmError(Exception):
    """Base class for all errors raised by mgdm."""


class InvalidInput(MgdmError, ValueError):
    pass


class NumericalFailure(MgdmError, ArithmeticError):
    pass


class SingularMatrix(NumericalFailure):
    """Raised when a factorization meets a pivot below the singularity threshold."""


class SchemaError(MgdmError, ValueError):
    pass


class EmptyData(MgdmError, ValueError):
    pass


class IoError(MgdmError, OSError):
    pass
