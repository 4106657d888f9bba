"""Error taxonomy shared by the library and the command-line front end."""


class AceError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(AceError, ValueError):
    pass


class DomainError(AceError, ValueError):
    """An input lies outside the domain of a formula (e.g. log|x| at x = 0)."""


class SingularityError(AceError, ValueError):
    """A model formula has a pole at the supplied parameters."""


class UndefinedLD50Error(AceError, ValueError):
    pass


class IngestionError(AceError):
    """An input file violates its schema."""


class DegenerateWeightError(AceError):
    """Every importance or likelihood weight underflowed to zero."""


class SingularInformationError(AceError):
    """Fisher information stayed singular after the allowed resamples."""


class EmptyDomainError(AceError):
    """No candidate point satisfies a coordinate's membership predicate."""


class ConstantResponseError(AceError):
    """Utility evaluations over a coordinate-design have zero spread."""


class ConstraintViolationError(AceError):
    pass


class ConfigError(AceError):
    pass


class AceRunError(AceError):
    """Every multi-start run failed; the individual failures are attached."""

    def __init__(self, message: str, failures: dict[int, Exception] | None = None):
        super().__init__(message)
        self.failures = failures or {}
