"""Reproducible Brownian paths on uniform grids.

Every sample path is derived from a counter-based stream keyed by
``(master_seed, tag, sample_index)``, so a path can be regenerated anywhere,
by any worker, bit for bit. Increments are drawn once on the finest grid;
coarser grids only ever see block sums of those increments.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence

import numpy as np

from .exceptions import DomainError
from .grid import TimeGrid

DEFAULT_TAG = "brownian"


def tag_digest(tag: str) -> int:
    """Stable 64-bit integer digest of an experiment tag."""
    return int.from_bytes(hashlib.md5(tag.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream for one (experiment tag, sample) pair.

    Attributes:
        master_seed: Non-negative 64-bit run seed
        tag: Experiment tag, e.g. ``"vdp-rate"``
        sample_index: Non-negative Monte-Carlo sample index
    """
    master_seed: int
    tag: str
    sample_index: int

    def __post_init__(self) -> None:
        if self.master_seed < 0 or self.master_seed >= 2 ** 64:
            raise DomainError(f"Master seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.sample_index < 0:
            raise DomainError(f"Sample index must be non-negative, got {self.sample_index}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence([int(self.master_seed), tag_digest(self.tag), int(self.sample_index)])
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments of an m-dimensional Wiener process on a uniform grid.

    ``increments[k]`` is W(t_{k+1}) - W(t_k). ``values`` holds W at every node,
    accumulated left to right on the finest grid the path was drawn on;
    coarsened paths subsample those values, so W_T is the same number at every
    level.
    """
    dimension_m: int
    grid: TimeGrid
    increments: np.ndarray
    master_seed: int
    sample_index: int
    tag: str = DEFAULT_TAG
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.steps_N, self.dimension_m):
            raise DomainError(
                f"Increments of shape {inc.shape} do not match grid "
                f"({self.grid.steps_N} steps) and dimension {self.dimension_m}"
            )
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        if self.values is None:
            vals = np.zeros((self.grid.steps_N + 1, self.dimension_m))
            np.add.accumulate(inc, axis=0, out=vals[1:])
        else:
            vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def terminal(self) -> np.ndarray:
        """W_T."""
        return self.values[-1]

    def value(self, k: int) -> np.ndarray:
        """W at node k."""
        return self.values[k]

    def increment_between(self, i: int, j: int) -> np.ndarray:
        """W(t_j) - W(t_i) for node indices i <= j, summed left to right."""
        if not 0 <= i <= j <= self.grid.steps_N:
            raise DomainError(f"Invalid node range {i}..{j}")
        total = np.zeros(self.dimension_m)
        for k in range(i, j):
            total = total + self.increments[k]
        return total

    def with_increments(self, increments: np.ndarray) -> "BrownianPath":
        """Copy of this path carrying different increments (values recomputed)."""
        return BrownianPath(self.dimension_m, self.grid, np.array(increments, dtype=float),
                            self.master_seed, self.sample_index, self.tag)


def sample_brownian(seed: int, sample_index: int, grid: TimeGrid, m: int,
                    tag: str = DEFAULT_TAG) -> BrownianPath:
    """Draw the Brownian path of one sample on ``grid``.

    The result depends only on the arguments, never on process or thread.

    Args:
        seed: Master seed of the run
        sample_index: Monte-Carlo sample index
        grid: Finest grid the path is needed on
        m: Dimension of the Wiener process
        tag: Experiment tag separating independent families of paths

    Returns:
        BrownianPath with N increments distributed N(0, h I_m)
    """
    if int(m) != m or m < 1:
        raise DomainError(f"Brownian dimension must be a positive integer, got {m}")
    rng = RandomStream(int(seed), tag, int(sample_index)).generator()
    increments = rng.standard_normal((grid.steps_N, int(m))) * np.sqrt(grid.h)
    return BrownianPath(int(m), grid, increments, int(seed), int(sample_index), tag)


def sample_brownian_batch(seed: int, indices: Iterable[int], grid: TimeGrid, m: int,
                          tag: str = DEFAULT_TAG) -> List[BrownianPath]:
    """Draw the paths of several samples; element i is ``sample_brownian(seed, indices[i], ...)``."""
    return [sample_brownian(seed, i, grid, m, tag) for i in indices]


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Aggregate increments in blocks of ``factor`` consecutive steps.

    Coarse increment j is ``inc[j*f] + inc[j*f + 1] + ... + inc[(j+1)*f - 1]``
    added strictly left to right.

    Raises:
        DomainError: if factor < 1 or factor does not divide the number of steps
    """
    if int(factor) != factor or factor < 1:
        raise DomainError(f"Coarsening factor must be a positive integer, got {factor}")
    factor = int(factor)
    n = path.grid.steps_N
    if n % factor != 0:
        raise DomainError(f"Coarsening factor {factor} does not divide {n} steps")
    if factor == 1:
        return path
    blocks = path.increments.reshape(n // factor, factor, path.dimension_m)
    coarse = blocks[:, 0, :].copy()
    for j in range(1, factor):
        coarse = coarse + blocks[:, j, :]
    return BrownianPath(path.dimension_m, TimeGrid(path.grid.horizon_T, n // factor), coarse,
                        path.master_seed, path.sample_index, path.tag,
                        values=path.values[::factor].copy())


def stack_increments(paths: Sequence[BrownianPath]) -> np.ndarray:
    """Increments of several paths as an (N, B, m) array for batched kernels."""
    if not paths:
        raise DomainError("At least one path is required")
    return np.stack([p.increments for p in paths], axis=1)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Block sums along axis 0 of an (N, ...) increment array, left to right."""
    n = increments.shape[0]
    if factor < 1 or n % factor != 0:
        raise DomainError(f"Coarsening factor {factor} does not divide {n} steps")
    if factor == 1:
        return increments
    blocks = increments.reshape((n // factor, factor) + increments.shape[1:])
    coarse = blocks[:, 0].copy()
    for j in range(1, factor):
        coarse = coarse + blocks[:, j]
    return coarse
