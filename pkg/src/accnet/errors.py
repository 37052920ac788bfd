"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AccnetError(Exception):
    exit_code = 3


class ValidationError(AccnetError, ValueError):
    """Bad input data or an out-of-domain argument."""

    exit_code = 1


class ConfigError(ValidationError):
    pass


class FiscalYearError(ValidationError):
    """A statement date falls outside every fiscal-year window."""


class UndefinedSimilarityError(ValidationError):
    pass


class UndefinedModularityError(ValidationError):
    pass


class UndefinedCorrelationError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class MissingArtifactError(AccnetError, FileNotFoundError):
    """A stage was run before the stage that produces its inputs."""

    exit_code = 2


class InvariantError(AccnetError):
    exit_code = 3
