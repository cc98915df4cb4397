class KineticCouplerError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KineticCouplerError, ValueError):
    """Invalid parameters or config; ``key`` names the offending field."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DimensionError(KineticCouplerError, ValueError):
    pass


class InconsistentParametersError(ConfigurationError):
    pass


class OutOfRegimeError(ConfigurationError):
    """A closed-form bound was requested outside its validity regime."""


class NumericError(KineticCouplerError, ArithmeticError):
    pass


class EnvelopeError(NumericError):
    """Rejection sampler acceptance rate too low."""


class InadmissibleRateError(NumericError):
    pass


class BlowUpError(NumericError):
    def __init__(self, message, step=None, member=None):
        super().__init__(message)
        self.step = step
        self.member = member


class FitDomainError(NumericError):
    pass
