"""Parallel Monte-Carlo driver with progress reporting and cancellation."""

import logging
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .exceptions import ExcessiveDivergenceError
from ..config.defaults import DEFAULT_BATCH_SIZE

logger = logging.getLogger(__name__)

BatchFunction = Callable[[Any, np.ndarray], Dict[str, np.ndarray]]
ProgressCallback = Callable[[int, int, str], bool]


class RunStatus(Enum):
    """Status codes for Monte-Carlo runs."""
    PROGRESS = "progress"
    COMPLETE = "complete"
    ERROR = "error"
    CANCELLED = "cancelled"


class RunCancelled(RuntimeError):
    """Raised by :meth:`MonteCarloRunner.run` when the run was cancelled."""


@dataclass
class BatchOutcome:
    """Result container for one finished batch.

    Attributes:
        status: COMPLETE or ERROR
        batch_index: Position of the batch in sample order
        start: First sample index of the batch
        stop: One past the last sample index
        arrays: Per-sample arrays with leading axis stop - start
        error: Exception raised by the batch function, if any
    """
    status: RunStatus
    batch_index: int
    start: int
    stop: int
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    error: Optional[BaseException] = None


def _evaluate(fn: BatchFunction, context: Any, batch_index: int, start: int,
              stop: int) -> BatchOutcome:
    arrays = fn(context, np.arange(start, stop))
    return BatchOutcome(RunStatus.COMPLETE, batch_index, start, stop, arrays)


def split_batches(total: int, batch_size: int) -> List[tuple]:
    """Fixed partition of 0..total-1 into (start, stop) ranges of ``batch_size``."""
    return [(s, min(s + batch_size, total)) for s in range(0, total, batch_size)]


def assemble(outcomes: List[BatchOutcome]) -> Dict[str, np.ndarray]:
    """Concatenate batch arrays in sample-index order."""
    ordered = sorted(outcomes, key=lambda o: o.start)
    if not ordered:
        return {}
    return {key: np.concatenate([o.arrays[key] for o in ordered], axis=0)
            for key in ordered[0].arrays}


class MonteCarloRunner:
    """Evaluates a batch function over sample indices 0..M-1.

    Samples are cut into batches of ``batch_size`` whatever the worker count,
    and per-sample results are reassembled in index order, so the returned
    arrays do not depend on ``workers``. With ``workers == 1`` everything runs
    in the calling process.

    The batch function must be a module-level callable taking
    ``(context, indices)`` and returning a dict of arrays whose leading axis
    matches ``indices``.
    """

    def __init__(self, workers: int = 1, batch_size: int = DEFAULT_BATCH_SIZE,
                 progress_callback: Optional[ProgressCallback] = None):
        if workers < 1:
            raise ValueError(f"Worker count must be positive, got {workers}")
        if batch_size < 1:
            raise ValueError(f"Batch size must be positive, got {batch_size}")
        self.workers = int(workers)
        self.batch_size = int(batch_size)
        self.progress_callback = progress_callback
        self._cancelled = threading.Event()
        self.status = RunStatus.PROGRESS

    def cancel(self) -> None:
        """Request cancellation; pending batches are dropped."""
        self._cancelled.set()

    @property
    def cancelled(self) -> bool:
        return self._cancelled.is_set()

    def _report(self, done: int, total: int, message: str) -> bool:
        if self.cancelled:
            return False
        if self.progress_callback is not None and self.progress_callback(done, total, message) is False:
            self.cancel()
            return False
        return True

    def run(self, fn: BatchFunction, context: Any, total: int) -> Dict[str, np.ndarray]:
        """Evaluate ``fn`` over all samples.

        Returns:
            Dict of per-sample arrays of length ``total`` in sample order

        Raises:
            RunCancelled: if cancelled through :meth:`cancel` or the progress callback
        """
        self._cancelled.clear()
        self.status = RunStatus.PROGRESS
        batches = split_batches(total, self.batch_size)
        started = time.perf_counter()
        outcomes: List[BatchOutcome] = []
        try:
            if self.workers == 1 or len(batches) == 1:
                for i, (start, stop) in enumerate(batches):
                    if not self._report(start, total, f"Batch {i + 1}/{len(batches)}"):
                        raise RunCancelled("Monte-Carlo run cancelled")
                    outcomes.append(_evaluate(fn, context, i, start, stop))
            else:
                outcomes = self._run_pool(fn, context, batches, total)
        except RunCancelled:
            self.status = RunStatus.CANCELLED
            raise
        except Exception:
            self.status = RunStatus.ERROR
            raise
        self._report(total, total, "Done")
        self.status = RunStatus.COMPLETE
        logger.debug("%d samples in %d batches took %.2f s", total, len(batches),
                     time.perf_counter() - started)
        return assemble(outcomes)

    def _run_pool(self, fn: BatchFunction, context: Any, batches: List[tuple],
                  total: int) -> List[BatchOutcome]:
        outcomes: List[BatchOutcome] = []
        done = 0
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            pending = {pool.submit(_evaluate, fn, context, i, start, stop)
                       for i, (start, stop) in enumerate(batches)}
            while pending:
                finished, pending = wait(pending, return_when=FIRST_COMPLETED)
                for future in finished:
                    outcome: BatchOutcome = future.result()
                    outcomes.append(outcome)
                    done += outcome.stop - outcome.start
                if not self._report(done, total, f"{len(outcomes)}/{len(batches)} batches"):
                    for future in pending:
                        future.cancel()
                    raise RunCancelled("Monte-Carlo run cancelled")
        return outcomes


def guard_divergence(diverged: np.ndarray, threshold: float) -> int:
    """Count diverged samples and fail when their fraction exceeds ``threshold``.

    Raises:
        ExcessiveDivergenceError: if more than ``threshold`` of the samples diverged
    """
    count = int(np.count_nonzero(diverged))
    if count:
        logger.warning("%d of %d samples diverged and are excluded", count, diverged.size)
    if count > threshold * diverged.size:
        raise ExcessiveDivergenceError(count, diverged.size, threshold)
    return count
