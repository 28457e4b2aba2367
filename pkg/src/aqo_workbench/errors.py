"""Exception hierarchy shared by the workbench modules.

The CLI maps each class onto a process exit code, so new failure kinds should
subclass one of these rather than raising bare ``ValueError``.
"""


class WorkbenchError(Exception):
    exit_code = 1


class InputError(WorkbenchError, ValueError):
    """Bad argument or malformed input file."""

    exit_code = 3


class SizeError(WorkbenchError):
    """A problem exceeds a configured resource cap."""

    exit_code = 4

    def __init__(self, message: str, cap_name: str | None = None):
        super().__init__(message)
        self.cap_name = cap_name


class NumericalError(WorkbenchError, ArithmeticError):
    """An iterative solver failed to converge."""

    exit_code = 1

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class GenerationError(WorkbenchError):
    """Instance generation failed for this seed; callers retry with another."""

    exit_code = 1


class InvariantError(WorkbenchError, AssertionError):
    """An internal invariant that should be impossible to break was broken."""

    exit_code = 1
