"""Helper utilities for SDE Perturbation Lab."""

import math
from typing import Callable, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import stats


class MeanEstimate(NamedTuple):
    """Monte-Carlo mean with its standard error."""
    mean: np.ndarray
    se: np.ndarray
    samples: int


class LogLogFit(NamedTuple):
    """Ordinary least squares fit of log2(y) against log2(x)."""
    slope: float
    intercept: float
    slope_se: float
    r_value: float


def central_difference(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                       step: float = 1e-5) -> np.ndarray:
    """Central finite-difference derivative of ``fn`` at ``x``.

    Args:
        fn: Function of a state vector of shape (d,) returning any array shape S
        x: Point of evaluation
        step: Difference step, scaled by max(1, |x_j|) per direction

    Returns:
        Array of shape S + (d,) whose last axis is the differentiation direction
    """
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[j] = step * max(1.0, abs(x[j]))
        columns.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * e[j]))
    return np.stack(columns, axis=-1)


def relative_error(actual: np.ndarray, reference: np.ndarray, floor: float = 1e-8) -> float:
    """Frobenius-norm relative error |actual - reference| / max(|reference|, floor)."""
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return float(np.linalg.norm(actual - reference) / max(np.linalg.norm(reference), floor))


def mean_and_se(samples: np.ndarray, axis: int = 0) -> MeanEstimate:
    """Sample mean and standard error along ``axis``.

    The standard error uses the unbiased sample variance; a single sample
    gets an infinite standard error.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = np.mean(samples, axis=axis)
    if n < 2:
        return MeanEstimate(mean, np.full_like(mean, np.inf), n)
    se = np.std(samples, axis=axis, ddof=1) / math.sqrt(n)
    return MeanEstimate(mean, se, n)


def rms_and_se(errors: np.ndarray) -> Tuple[float, float]:
    """Root-mean-square of error norms with a delta-method standard error.

    Args:
        errors: Per-sample error norms (1-D)

    Returns:
        (rms, se) where se is SE(mean of squares) / (2 rms)
    """
    squares = np.asarray(errors, dtype=float) ** 2
    est = mean_and_se(squares)
    rms = float(np.sqrt(est.mean))
    se = float(est.se / (2.0 * rms)) if rms > 0 else 0.0
    return rms, se


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> LogLogFit:
    """OLS fit of log2(y) = intercept + slope * log2(x) over all points.

    Raises:
        ValueError: if fewer than two points or any value is not positive
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Log-log fit needs at least two points with positive values")
    res = stats.linregress(np.log2(x), np.log2(y))
    return LogLogFit(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue))


def z_score(estimate: float, target: float, se: float) -> float:
    """Distance of ``estimate`` from ``target`` in standard errors."""
    if se == 0:
        # constant estimators carry rounding only
        return 0.0 if math.isclose(estimate, target, rel_tol=1e-12, abs_tol=1e-15) else math.inf
    return abs(estimate - target) / se


def two_sided_p_value(z: float) -> float:
    """Two-sided normal p-value of a z-score."""
    return float(2.0 * stats.norm.sf(abs(z)))


def within_se(estimate, target, se, k: float = 3.0) -> bool:
    """True when every component of ``estimate`` lies within k SE of ``target``."""
    estimate = np.asarray(estimate, dtype=float)
    return bool(np.all(np.abs(estimate - target) <= k * np.asarray(se, dtype=float)))


def format_float(value: float) -> str:
    """Format a number with 17 significant digits (round-trips doubles)."""
    return f"{float(value):.17g}"


def format_duration(seconds: float) -> str:
    """Format a wall-clock duration in human-readable form (e.g. "1 min 3.2 s")."""
    if seconds < 60:
        return f"{seconds:.2f} s"
    minutes, rest = divmod(seconds, 60)
    if minutes < 60:
        return f"{int(minutes)} min {rest:.1f} s"
    hours, minutes = divmod(minutes, 60)
    return f"{int(hours)} h {int(minutes)} min"
