"""
Exceptions raised by the lab

Every error carries a short machine readable ``code`` that ends up in
the JSON error documents printed by the command line. The three top
level families map onto the command line exit codes (see
``passage_lab.common.status``).
"""


class PassageLabError(Exception):
    """Base class for every error raised by the lab"""

    code = "passage-lab-error"

    def __init__(self, message: str, code: str = None):
        super().__init__(message)
        if code:
            self.code = code


######################################################################
# Bad input: exit code 1
######################################################################
class DataValidationError(PassageLabError):
    """Used for any data validation errors when deserializing"""

    code = "invalid-data"


class DomainError(DataValidationError):
    """A parameter lies outside the domain of an operation"""

    code = "domain-error"


class SlndUnknownError(DomainError):
    """The process carries no strong local non-determinism constant"""

    code = "slnd-unknown"


class RegimeMismatchError(DataValidationError):
    """The boundary exponent does not match the requested regime"""

    code = "regime-mismatch"


class OutOfRangeError(DomainError):
    """Input outside the precision-safe range of an inversion"""

    code = "out-of-range"


class ConfigFileError(DataValidationError):
    """A flat config file could not be parsed"""

    code = "config-error"

    def __init__(self, message: str, line_number: int = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


######################################################################
# Failed consistency checks: exit code 2
######################################################################
class InvariantViolation(PassageLabError):
    """An estimate contradicts a bound it must respect"""

    code = "invariant-violation"


######################################################################
# Numerical trouble: exit code 3
######################################################################
class NumericalError(PassageLabError):
    """A numerical procedure failed to converge"""

    code = "non-convergence"


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance"""

    code = "quadrature-nonconvergence"


class NonPsdError(NumericalError):
    """A covariance matrix could not be factored even after jitter"""

    code = "non-psd"


class KummerError(NumericalError):
    """Kummer's series cannot be evaluated for these parameters"""

    code = "kummer-error"


class RootNotBracketedError(NumericalError):
    """A root search ran out of bracket"""

    code = "root-not-bracketed"


class FitError(NumericalError):
    """The survival curve cannot support an exponent fit"""

    code = "fit-error"
