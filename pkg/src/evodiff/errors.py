"""Exception hierarchy shared by all evodiff modules."""


class EvodiffError(Exception):
    """Base class for every error raised by this package."""


class HorizonError(EvodiffError, ValueError):
    """A time or point lies outside the admissible range."""


class AdmissibilityError(EvodiffError):
    """A growth law or model violates a structural requirement."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ValidationError(EvodiffError, ValueError):
    pass


class ModelEvaluationError(EvodiffError):
    """f or g produced a non-finite value."""

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class ContractError(EvodiffError):
    """A call-order precondition was violated (e.g. ghosts not closed)."""


class IntegrationError(EvodiffError):
    def __init__(self, message, t=None, location=None):
        super().__init__(message)
        self.t = t
        self.location = location


class ConfigError(EvodiffError):
    """Configuration could not be validated.

    ``errors`` holds every problem found, not only the first.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
