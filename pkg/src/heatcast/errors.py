"""Exception hierarchy; each family maps to a CLI exit code."""


class HeatcastError(Exception):
    exit_code = 1


class ConfigError(HeatcastError):
    exit_code = 2


class DataError(HeatcastError):
    exit_code = 3


class NumericError(HeatcastError):
    exit_code = 4


class StageError(HeatcastError):
    """Wraps a failure inside a pipeline stage, keeping the cause's exit code."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
