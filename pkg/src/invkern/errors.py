"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``ConfigError`` -> 1,
``ValidationError`` -> 2, ``InvkernRuntimeError`` -> 3.
"""


class InvkernError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(InvkernError, ValueError):
    """Bad parameters, malformed specs or configs."""


class ValidationError(InvkernError):
    """A mathematical precondition is violated (group axioms, unitarity, PSD)."""


class GroupError(ValidationError):
    pass


class InvkernRuntimeError(InvkernError):
    """Failures that are not the caller's fault in the usage sense."""


class ConvergenceError(InvkernRuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class FormatError(InvkernRuntimeError):
    """On-disk artifact is unreadable or has the wrong version."""


class ChecksumError(FormatError):
    pass
