"""
Exception hierarchy shared by the estimators and the command-line app.

Validation errors map to exit code 1, numerical failures to exit code 2.
"""

from typing import Optional


class CCAError(Exception):
    """Base error; ``stage`` names the pipeline step that raised it"""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


# Validation errors

class ValidationError(CCAError, ValueError):
    """Input or configuration does not satisfy a precondition"""


class DimensionError(ValidationError):
    pass


class InsufficientSamplesError(ValidationError):
    pass


class ScaleError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DataFormatError(ValidationError):
    """Malformed input file"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


# Numerical failures

class NumericalError(CCAError, ArithmeticError):
    """A computation failed or produced an unusable result"""


class RankDeficiencyError(NumericalError):
    def __init__(self, message: str, observed_rank: Optional[int] = None):
        super().__init__(message)
        self.observed_rank = observed_rank


class DegenerateWeightsError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    def __init__(self, message: str, sweep: Optional[int] = None, condition: Optional[float] = None):
        super().__init__(message)
        self.sweep = sweep
        self.condition = condition


class RecoveryError(NumericalError):
    pass


class InsufficientTargetsError(NumericalError):
    pass


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def exit_code_for(error: BaseException) -> int:
    """Exit code for an error raised by a command"""
    if isinstance(error, (ValidationError, OSError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL
