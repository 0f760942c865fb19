"""Exception types shared across the library."""


class SasrError(Exception):
    """Base class for library errors."""


class DimensionError(SasrError, ValueError):
    """Operands have incompatible or unsupported shapes."""


class PreconditionError(SasrError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(SasrError, ValueError):
    """A configuration document or parameter set is invalid."""


class GraphConsumedError(SasrError, RuntimeError):
    """A backward graph was reused after its gradients were consumed."""


class CalibrationError(SasrError, RuntimeError):
    """Coefficient calibration is degenerate (zero edge-term signal)."""


class DivergenceError(SasrError, ArithmeticError):
    """Training produced a non-finite loss."""
