"""
Exception hierarchy for the composition toolkit
"""

from typing import Optional


class CompositionError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigurationError(CompositionError, ValueError):
    """Invalid configuration, dimension or index"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScheduleError(CompositionError, ValueError):
    """Schedule cannot be derived or fails validation"""


class SamplingError(CompositionError, ValueError):
    """Impossible index batch request"""


class InputError(CompositionError, ValueError):
    """Verification input violates its precondition"""


class DivergenceError(CompositionError, RuntimeError):
    """Iterate became non-finite or left the divergence radius"""

    def __init__(self, epoch: int, step: int, norm: float):
        self.epoch = epoch
        self.step = step
        self.norm = norm
        super().__init__(
            f"iterate diverged at epoch {epoch}, step {step} (norm={norm!r})"
        )
