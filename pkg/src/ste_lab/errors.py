"""Exception hierarchy. Each family maps onto a CLI exit code."""


class SteError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(SteError, ValueError):
    """Invalid configuration (bands, orders, segment sizes, schemas)."""

    exit_code = 2


class InvalidBandError(ConfigError):
    pass


class SchemaError(ConfigError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class DataError(SteError, ValueError):
    """Problems with the data itself: too short, NaN cells, unreadable files."""

    exit_code = 3


class TooShortError(DataError):
    pass


class InputError(DataError):
    """Unreadable, missing or malformed input file."""


class DomainError(DataError):
    """Copula argument outside the open unit interval."""


class NumericalError(SteError, RuntimeError):
    """Optimizer or root-finder failure."""

    exit_code = 4


class DesignError(NumericalError):
    pass


class FitError(NumericalError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class StageError(SteError):
    """Wraps an error raised inside one stage of the STE pipeline."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", 1)
