"""
Blab Errors - Exception hierarchy with CLI exit codes
"""

from typing import Optional


class BlabError(Exception):
    """Base class for every error raised by blab"""

    exit_code = 1


class PreconditionError(BlabError):
    exit_code = 2


class GridError(PreconditionError):
    pass


class FieldError(PreconditionError):
    pass


class SupportError(PreconditionError):
    """Field support touches the grid boundary or leaves a required region"""


class DegenerateDilatationError(PreconditionError):
    """|mu| reached 1, or exceeds the solver cap"""


class FieldFormatError(PreconditionError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path:
            location = f" in {path}"
        if line is not None:
            location += f" at line {line}"
        super().__init__(f"{message}{location}")
        self.path = path
        self.line = line


class InversionError(PreconditionError):
    pass


class BoundaryDeviationError(PreconditionError):
    def __init__(self, deviation: float, tolerance: float):
        super().__init__(
            f"Boundary image deviates from the unit circle by {deviation:.3e} "
            f"(tolerance {tolerance:.3e})"
        )
        self.deviation = deviation
        self.tolerance = tolerance


class ConvergenceError(BlabError):
    exit_code = 3

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class SequenceError(BlabError):
    exit_code = 3


class VerdictError(BlabError):
    exit_code = 4


class StageError(BlabError):
    """A pipeline stage failed; keeps the exit code of the underlying error"""

    def __init__(self, stage: str, cause: BlabError):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
