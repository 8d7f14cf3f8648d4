"""Uniform time grids on [0, T]."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_N = T.

    Attributes:
        horizon_T: Time horizon T > 0
        steps_N: Number of steps N >= 1
    """
    horizon_T: float
    steps_N: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.horizon_T) or self.horizon_T <= 0:
            raise DomainError(f"Time horizon must be positive, got {self.horizon_T}")
        if int(self.steps_N) != self.steps_N or self.steps_N < 1:
            raise DomainError(f"Number of steps must be a positive integer, got {self.steps_N}")

    @property
    def h(self) -> float:
        """Uniform step size T/N."""
        return self.horizon_T / self.steps_N

    def node(self, k: int) -> float:
        """Time of node k; node(N) is exactly T."""
        if not 0 <= k <= self.steps_N:
            raise DomainError(f"Node index {k} outside 0..{self.steps_N}")
        if k == self.steps_N:
            return float(self.horizon_T)
        return k * self.horizon_T / self.steps_N

    def nodes(self) -> np.ndarray:
        """All N + 1 node times."""
        return np.array([self.node(k) for k in range(self.steps_N + 1)])

    def floor_index(self, r: float) -> int:
        """Index of the last node not after r."""
        return int(min(self.steps_N, np.floor(r / self.h + 1e-12)))

    def refines(self, other: "TimeGrid") -> bool:
        """True when every node of ``other`` is a node of this grid."""
        return (self.horizon_T == other.horizon_T
                and self.steps_N % other.steps_N == 0)

    def factor_over(self, coarse: "TimeGrid") -> int:
        """Refinement factor of this grid over ``coarse``.

        Raises:
            DomainError: if this grid does not refine ``coarse``
        """
        if not self.refines(coarse):
            raise DomainError(
                f"Grid with {self.steps_N} steps does not refine grid with "
                f"{coarse.steps_N} steps on the same horizon"
            )
        return self.steps_N // coarse.steps_N


def make_grid(T: float, N: int) -> TimeGrid:
    """Build the uniform grid with N steps on [0, T].

    Raises:
        DomainError: if T <= 0 or N < 1
    """
    if int(N) != N:
        raise DomainError(f"Number of steps must be an integer, got {N}")
    return TimeGrid(float(T), int(N))
