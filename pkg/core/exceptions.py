"""
Exception hierarchy shared by every app.

All domain errors derive from ``DFDError`` so management commands can turn
them into a machine-readable error record in one place.
"""


class DFDError(Exception):
    """Base class for all data-free distillation errors."""


class InvalidArgumentError(DFDError, ValueError):
    """Raised when an operation receives an argument outside its domain."""


class DivergenceUndefinedError(DFDError, ArithmeticError):
    """Raised when KL(p || q) is undefined because q vanishes where p does not."""


class InfiniteLossError(DFDError, ArithmeticError):
    """Raised when a loss would be infinite (e.g. zero probability on the label)."""


class NonFiniteLossError(DFDError, ArithmeticError):
    """
    Raised when a loss or gradient becomes NaN or infinite.

    Attributes
    ----------
    term : str
        Name of the loss term (or quantity) that went non-finite.
    """

    def __init__(self, term: str, detail: str = "") -> None:
        self.term = term
        message = f"non-finite value in {term}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class ConfigValidationError(DFDError, ValueError):
    """
    Raised when an experiment configuration fails validation.

    Attributes
    ----------
    key : str
        Dotted path of the offending key (e.g. ``kd.alpha``).
    """

    def __init__(self, key: str, constraint: str) -> None:
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")


class CheckpointError(DFDError):
    """Raised when a checkpoint file is malformed or has an unsupported version."""


class PrerequisiteError(DFDError):
    """Raised when a command needs an artifact that an earlier command produces."""

    def __init__(self, artifact: str, command: str) -> None:
        self.artifact = artifact
        self.command = command
        super().__init__(f"missing {artifact}; run `manage.py {command}` first")
