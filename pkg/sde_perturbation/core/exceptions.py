"""Exception hierarchy for SDE Perturbation Lab."""

from typing import Optional


class SdePerturbationError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(SdePerturbationError, ValueError):
    """A mathematical precondition was violated (bad grid, bad parameters, ...)."""


class ConfigError(SdePerturbationError):
    """The run configuration is invalid or inconsistent."""


class DivergedSampleError(SdePerturbationError, ArithmeticError):
    """A simulated state became non-finite.

    Attributes:
        step: Fine-grid step index at which the first non-finite value appeared
        sample_index: Monte-Carlo sample index, if known
    """

    def __init__(self, step: int, sample_index: Optional[int] = None, message: str = ""):
        self.step = int(step)
        self.sample_index = sample_index
        where = f"step {self.step}"
        if sample_index is not None:
            where += f" of sample {sample_index}"
        super().__init__(message or f"State diverged at {where}")


class ExcessiveDivergenceError(SdePerturbationError):
    """Too many Monte-Carlo samples diverged for the statistics to be trusted."""

    def __init__(self, diverged: int, total: int, threshold: float):
        self.diverged = diverged
        self.total = total
        self.threshold = threshold
        super().__init__(
            f"{diverged} of {total} samples diverged "
            f"(allowed fraction {threshold:.3%})"
        )
