"""Stochastic van der Pol oscillator with additive forcing and its experiments.

dX1 = X2 dt
dX2 = ((gamma - alpha X1^2) X2 - delta X1) dt + beta dW

The drift grows cubically, so explicit Euler steps are tamed. This module
holds the drift, the Gaussian-square moment generating function, the
exponential-moment and flow-derivative moment checks and the coupled strong
convergence study.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .brownian import RandomStream, sample_brownian, stack_increments
from .exceptions import DomainError
from .fields import ConstantDiffusion, VectorField
from .flows import flow_solve_batch, tamed_euler_batch
from .grid import TimeGrid, make_grid
from .runner import MonteCarloRunner, guard_divergence
from ..config.defaults import (DEFAULT_MGF_CASES, MAX_DIVERGENCE_FRACTION, MGF_MAX_EXPONENT,
                               MGF_MAX_WEIGHT_SPREAD)
from ..utils.helpers import LogLogFit, loglog_fit, mean_and_se, rms_and_se, z_score

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VdpParams:
    """Coefficients, initial value and horizon of the oscillator.

    Raises:
        DomainError: if a coefficient or the horizon is not strictly positive
    """
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    xi: Tuple[float, float] = (0.0, 0.0)
    T: float = 1.0

    def __post_init__(self) -> None:
        for name in ('alpha', 'beta', 'gamma', 'delta'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be strictly positive, got {value}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise DomainError(f"Horizon must be positive, got {self.T}")
        if len(self.xi) != 2:
            raise DomainError(f"Initial value must have two components, got {self.xi}")
        object.__setattr__(self, 'xi', tuple(float(v) for v in self.xi))

    @classmethod
    def from_mapping(cls, values: Dict[str, object]) -> "VdpParams":
        """Build from a mapping with ``horizon`` for T (the config layout)."""
        return cls(float(values['alpha']), float(values['beta']), float(values['gamma']),
                   float(values['delta']), tuple(values['xi']), float(values['horizon']))

    @property
    def xi_array(self) -> np.ndarray:
        return np.array(self.xi, dtype=float)

    @property
    def beta_column(self) -> np.ndarray:
        """Diffusion matrix (0, beta)^T of shape (2, 1)."""
        return np.array([[0.0], [self.beta]])

    def diffusion(self) -> ConstantDiffusion:
        return ConstantDiffusion(self.beta_column)


class VanDerPolDrift(VectorField):
    """mu(x1, x2) = (x2, (gamma - alpha x1^2) x2 - delta x1)."""

    dimension = 2
    growth_exponent = 3.0

    def __init__(self, params: VdpParams):
        self.params = params

    def eval(self, t, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2, (p.gamma - p.alpha * x1 * x1) * x2 - p.delta * x1], axis=-1)

    def jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        x1, x2 = x[..., 0], x[..., 1]
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -2.0 * p.alpha * x1 * x2 - p.delta
        J[..., 1, 1] = p.gamma - p.alpha * x1 * x1
        return J

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        a = self.params.alpha
        x1, x2 = x[..., 0], x[..., 1]
        H = np.zeros(x.shape[:-1] + (2, 2, 2))
        H[..., 1, 0, 0] = -2.0 * a * x2
        H[..., 1, 0, 1] = -2.0 * a * x1
        H[..., 1, 1, 0] = -2.0 * a * x1
        return H

    def __repr__(self) -> str:
        return f"VanDerPolDrift({self.params})"


def vdp_drift(x, params: VdpParams) -> np.ndarray:
    """Evaluate the van der Pol drift at ``x`` (shape (..., 2))."""
    return VanDerPolDrift(params).eval(0.0, x)


# ---------------------------------------------------------------------------
# Moment generating function of a shifted Gaussian square

def gaussian_square_mgf(a: float, b: float, c: float) -> float:
    """E[exp(c (a + b X)^2)] for standard normal X.

    Equals (1 - 2 b^2 c)^(-1/2) exp(a^2 (c + 2 (b c)^2 / (1 - 2 b^2 c))).

    Raises:
        DomainError: if 2 b^2 c >= 1, where the expectation is infinite
    """
    q = 1.0 - 2.0 * b * b * c
    if q <= 0:
        raise DomainError(f"E[exp(c(a+bX)^2)] diverges for 2b^2c = {2.0 * b * b * c} >= 1")
    return math.exp(a * a * (c + 2.0 * (b * c) ** 2 / q)) / math.sqrt(q)


@dataclass(frozen=True)
class MgfCase:
    """One (a, b, c) triple with both sides of the closed form."""
    case: int
    a: float
    b: float
    c: float
    closed_form: float
    mc_mean: float
    se: float
    z: float


def weight_spread(a: float, b: float, c: float) -> float:
    """Standard deviation of the log importance weight used by :func:`mgf_monte_carlo`."""
    return abs(2.0 * a * b * c) / math.sqrt(1.0 - 2.0 * b * b * c)


def draw_mgf_cases(count: int, seed: int, max_exponent: float = MGF_MAX_EXPONENT,
                   max_spread: float = MGF_MAX_WEIGHT_SPREAD) -> List[Tuple[float, float, float]]:
    """Random admissible triples with a, b uniform on [-1, 1] and 0 < 2 b^2 c <= max_exponent.

    Triples whose log importance weight spreads wider than ``max_spread`` are
    redrawn, so the reported standard errors stay reliable.
    """
    rng = RandomStream(seed, "mgf-cases", 0).generator()
    cases = []
    while len(cases) < count:
        a, b = rng.uniform(-1.0, 1.0, size=2)
        u = rng.uniform(0.05, max_exponent)
        c = min(u / (2.0 * b * b), 1.0)
        if weight_spread(a, b, c) > max_spread:
            continue
        cases.append((float(a), float(b), float(c)))
    return cases


def _combine(parts: List[Tuple[int, float, float]]) -> Tuple[int, float, float]:
    # pairwise merge of (count, mean, sum of squared deviations)
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        total = n + nb
        delta = mb - mean
        mean = mean + delta * nb / total
        m2 = m2 + m2b + delta * delta * n * nb / total
        n = total
    return n, mean, m2


def mgf_monte_carlo(a: float, b: float, c: float, M: int, seed: int, case: int = 0,
                    chunk: int = 1_000_000) -> Tuple[float, float]:
    """Monte-Carlo estimate of E[exp(c (a + b X)^2)] with its standard error.

    Draws come from N(0, s^2) with s^2 = 1 / (1 - 2 b^2 c) and are reweighted
    by the density ratio, which keeps the estimator's variance finite for
    every admissible triple.
    """
    q = 1.0 - 2.0 * b * b * c
    if q <= 0:
        raise DomainError(f"No finite expectation for 2b^2c = {2.0 * b * b * c}")
    s = 1.0 / math.sqrt(q)
    rng = RandomStream(seed, "mgf", case).generator()
    parts = []
    remaining = int(M)
    while remaining > 0:
        n = min(chunk, remaining)
        y = s * rng.standard_normal(n)
        values = s * np.exp(c * (a + b * y) ** 2 - b * b * c * y * y)
        parts.append((n, float(np.mean(values)), float(np.sum((values - np.mean(values)) ** 2))))
        remaining -= n
    n, mean, m2 = _combine(parts)
    se = math.sqrt(m2 / (n - 1) / n) if n > 1 else math.inf
    return mean, se


def mgf_check(cases: Optional[Sequence[Tuple[float, float, float]]] = None, M: int = 10 ** 6,
              seed: int = 0, count: int = DEFAULT_MGF_CASES) -> List[MgfCase]:
    """Compare the closed form with Monte-Carlo means for several triples.

    Args:
        cases: (a, b, c) triples; drawn with :func:`draw_mgf_cases` when None
        M: Samples per triple
        seed: Master seed
        count: Number of triples to draw when ``cases`` is None
    """
    if cases is None:
        cases = draw_mgf_cases(count, seed)
    results = []
    for i, (a, b, c) in enumerate(cases):
        exact = gaussian_square_mgf(a, b, c)
        mean, se = mgf_monte_carlo(a, b, c, M, seed, i)
        results.append(MgfCase(i, a, b, c, exact, mean, se, z_score(mean, exact, se)))
        logger.debug("MGF case %d: closed form %.8g, MC %.8g +- %.2g", i, exact, mean, se)
    return results


# ---------------------------------------------------------------------------
# Exponential moments of the tamed scheme

def exp_moment_constant(params: VdpParams) -> float:
    """Largest admissible c = exp(-T (1 + 3 beta^2 + delta + 2 gamma))."""
    p = params
    return math.exp(-p.T * (1.0 + 3.0 * p.beta ** 2 + p.delta + 2.0 * p.gamma))


def exp_moment_bound(params: VdpParams) -> float:
    """exp((2 beta^2 + 1) T + |xi|^2)."""
    return math.exp((2.0 * params.beta ** 2 + 1.0) * params.T + float(np.sum(params.xi_array ** 2)))


def min_steps(params: VdpParams) -> float:
    """Smallest N for which the exponential-moment bound is asserted."""
    return max(6.0 * params.beta ** 2 * params.T, params.T)


@dataclass(frozen=True)
class SchemeSetup:
    """Context shared by the scheme batch workers."""
    params: VdpParams
    steps: int
    seed: int
    tag: str
    c: float = 0.0

    @property
    def grid(self) -> TimeGrid:
        return make_grid(self.params.T, self.steps)


def _increments(seed: int, indices: np.ndarray, grid: TimeGrid, tag: str) -> np.ndarray:
    return stack_increments([sample_brownian(seed, int(i), grid, 1, tag) for i in indices])


def exp_moment_worker(setup: SchemeSetup, indices: np.ndarray) -> Dict[str, np.ndarray]:
    """Runner batch function: exp(c |Y_k|^2) at every node for each sample."""
    grid = setup.grid
    p = setup.params
    batch = tamed_euler_batch(VanDerPolDrift(p), p.beta_column, p.xi_array, grid,
                              _increments(setup.seed, indices, grid, setup.tag), record=True)
    with np.errstate(over='ignore', invalid='ignore'):
        values = np.exp(setup.c * np.sum(batch.states ** 2, axis=-1)).T
    return {'values': values, 'diverged': batch.diverged_at >= 0}


@dataclass(frozen=True)
class MomentProfile:
    """Per-node empirical exponential moments against the bound."""
    times: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    bound: float
    c: float
    samples: int
    diverged: int
    passes: bool


def exp_moment_check(params: VdpParams, N: int, M: int, seed: int,
                     runner: Optional[MonteCarloRunner] = None, z_threshold: float = 3.0,
                     max_divergence: float = MAX_DIVERGENCE_FRACTION) -> MomentProfile:
    """Empirical E[exp(c |Y^N_k|^2)] at every node of the tamed scheme.

    Passes iff every node mean is at most bound + z * SE.

    Raises:
        DomainError: if N < max(6 beta^2 T, T)
    """
    if N < min_steps(params):
        raise DomainError(f"Need N >= {min_steps(params)} for the exponential-moment bound, got {N}")
    c = exp_moment_constant(params)
    setup = SchemeSetup(params, int(N), int(seed), "expmoment", c)
    runner = runner or MonteCarloRunner()
    out = runner.run(exp_moment_worker, setup, M)
    diverged = guard_divergence(out['diverged'], max_divergence)
    est = mean_and_se(out['values'][~out['diverged']])
    bound = exp_moment_bound(params)
    passes = bool(np.all(est.mean <= bound + z_threshold * est.se))
    logger.info("Exponential moments: max node mean %.6g against bound %.6g, pass=%s",
                float(np.max(est.mean)), bound, passes)
    return MomentProfile(setup.grid.nodes(), est.mean, est.se, bound, c, est.samples, diverged, passes)


# ---------------------------------------------------------------------------
# Moments of the derivative flows

@dataclass(frozen=True)
class FlowMomentSetup:
    """Context of the derivative-moment batch worker."""
    mu: VectorField
    params: VdpParams
    steps: int
    p: float
    pairs: Tuple[Tuple[int, int], ...]
    seed: int
    tag: str = "flowmoment"


def moment_pairs(steps: int, count: int = 5) -> Tuple[Tuple[int, int], ...]:
    """A count x count set of node pairs (r, t) with r < t on a grid of ``steps`` steps.

    r runs over i T / count and t over r + (j + 1)(T - r) / count, both
    rounded to the nearest node.
    """
    if steps < count * count:
        raise DomainError(f"Need at least {count * count} steps for {count}x{count} pairs")
    pairs = []
    for i in range(count):
        r = int(round(i * steps / count))
        for j in range(count):
            t = int(round(r + (j + 1) * (steps - r) / count))
            pairs.append((r, max(t, r + 1)))
    return tuple(pairs)


def flow_moment_worker(setup: FlowMomentSetup, indices: np.ndarray) -> Dict[str, np.ndarray]:
    """Runner batch function: |X1_{r,t}|^p and |X2_{r,t}|^p started from the scheme at r."""
    p = setup.params
    grid = make_grid(p.T, setup.steps)
    increments = _increments(setup.seed, indices, grid, setup.tag)
    scheme = tamed_euler_batch(setup.mu, p.beta_column, p.xi_array, grid, increments, record=True)
    sigma = ConstantDiffusion(p.beta_column)
    x1 = np.empty((len(indices), len(setup.pairs)))
    x2 = np.empty_like(x1)
    diverged = scheme.diverged_at >= 0
    for j, (r, t) in enumerate(setup.pairs):
        flow = flow_solve_batch(setup.mu, sigma, r, scheme.states[r], increments, grid, t_index=t)
        finite = np.all(np.isfinite(flow.X1), axis=(-2, -1))
        # the SVD behind the operator norm rejects non-finite input
        norm1 = np.linalg.norm(np.where(finite[:, None, None], flow.X1, 0.0), ord=2, axis=(-2, -1))
        with np.errstate(invalid='ignore', over='ignore'):
            x1[:, j] = np.where(finite, norm1, np.nan) ** setup.p
            x2[:, j] = np.sqrt(np.sum(flow.X2 ** 2, axis=(-3, -2, -1))) ** setup.p
        diverged |= flow.diverged | ~finite
    return {'x1': x1, 'x2': x2, 'diverged': diverged | ~np.isfinite(x1).all(axis=1)
            | ~np.isfinite(x2).all(axis=1)}


@dataclass(frozen=True)
class FlowMomentTable:
    """E|X1_{r,t}|^p (operator norm) and E|X2_{r,t}|^p (Frobenius norm) per pair."""
    pairs: Tuple[Tuple[int, int], ...]
    times: np.ndarray
    moment_x1: np.ndarray
    se_x1: np.ndarray
    moment_x2: np.ndarray
    se_x2: np.ndarray
    p: float
    samples: int
    diverged: int

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.moment_x1)) and np.all(np.isfinite(self.moment_x2)))


def flow_moment_check(params: VdpParams, p: float, N: int, M: int, seed: int,
                      mu: Optional[VectorField] = None,
                      runner: Optional[MonteCarloRunner] = None,
                      max_divergence: float = MAX_DIVERGENCE_FRACTION) -> FlowMomentTable:
    """Empirical p-th moments of the derivative flows over a 5 x 5 set of (r, t).

    The flows start at (r, Y^N_r), Y^N the tamed scheme, and are driven by the
    same increments. Only finiteness is asserted.

    Args:
        mu: Drift of both the scheme and the flow; van der Pol when None
    """
    if p < 1:
        raise DomainError(f"Moment order must be at least 1, got {p}")
    mu = mu or VanDerPolDrift(params)
    if mu.dimension != 2:
        raise DomainError(f"The oscillator state is two-dimensional, drift has dimension {mu.dimension}")
    setup = FlowMomentSetup(mu, params, int(N), float(p), moment_pairs(int(N)), int(seed))
    runner = runner or MonteCarloRunner()
    out = runner.run(flow_moment_worker, setup, M)
    diverged = guard_divergence(out['diverged'], max_divergence)
    keep = ~out['diverged']
    e1 = mean_and_se(out['x1'][keep])
    e2 = mean_and_se(out['x2'][keep])
    grid = make_grid(params.T, N)
    times = np.array([(grid.node(r), grid.node(t)) for r, t in setup.pairs])
    table = FlowMomentTable(setup.pairs, times, e1.mean, e1.se, e2.mean, e2.se, float(p),
                            e1.samples, diverged)
    logger.info("Flow moments (p=%g): max E|X1|^p %.6g, max E|X2|^p %.6g", p,
                float(np.max(e1.mean)), float(np.max(e2.mean)))
    return table


# ---------------------------------------------------------------------------
# Strong convergence

def coupled_errors(params: VdpParams, levels: Sequence[int], reference_steps: int,
                   increments: np.ndarray, tamed: bool = True):
    """Terminal errors of the schemes at ``levels`` against the reference.

    Every scheme is driven by block sums of the same fine increments
    (N_ref, B, 1); the reference is the tamed scheme at N_ref.

    Returns:
        (errors (B, L), diverged (B, L), tamed_fraction (B, L))
    """
    mu = VanDerPolDrift(params)
    ref_grid = make_grid(params.T, reference_steps)
    for n in levels:
        if reference_steps % n != 0:
            raise DomainError(f"Level {n} does not divide {reference_steps}")
    reference = tamed_euler_batch(mu, params.beta_column, params.xi_array, ref_grid, increments)
    ref_bad = reference.diverged_at >= 0
    batch = increments.shape[1]
    errors = np.empty((batch, len(levels)))
    diverged = np.empty((batch, len(levels)), dtype=bool)
    fractions = np.empty((batch, len(levels)))
    for j, n in enumerate(levels):
        scheme = tamed_euler_batch(mu, params.beta_column, params.xi_array,
                                   make_grid(params.T, n), increments, tamed=tamed)
        with np.errstate(invalid='ignore', over='ignore'):
            errors[:, j] = np.sqrt(np.sum((scheme.terminal - reference.terminal) ** 2, axis=-1))
        diverged[:, j] = ref_bad | (scheme.diverged_at >= 0) | ~np.isfinite(errors[:, j])
        fractions[:, j] = scheme.tamed_steps / n
    return errors, diverged, fractions


@dataclass(frozen=True)
class RateSetup:
    """Context of the strong-rate batch worker."""
    params: VdpParams
    levels: Tuple[int, ...]
    reference_steps: int
    seed: int
    tamed: bool = True
    tag: str = "vdp-rate"


def strong_rate_worker(setup: RateSetup, indices: np.ndarray) -> Dict[str, np.ndarray]:
    """Runner batch function: coupled terminal errors for every level."""
    grid = make_grid(setup.params.T, setup.reference_steps)
    increments = _increments(setup.seed, indices, grid, setup.tag)
    errors, diverged, fractions = coupled_errors(setup.params, setup.levels,
                                                 setup.reference_steps, increments, setup.tamed)
    return {'errors': errors, 'diverged': diverged, 'tamed_fraction': fractions}


@dataclass
class ExperimentReport:
    """Outcome of a strong convergence study.

    Attributes:
        levels: Scheme step counts N
        rms: Root-mean-square terminal error per level
        se: Standard error of each RMS value
        fit: OLS fit of log2(rms) against log2(N); None with fewer than two usable levels
        samples: Non-diverged samples per level
        diverged: Diverged samples per level
        tamed_fraction: Mean fraction of suppressed drift steps per level
        master_seed: Seed of the run
        reference_steps: N_ref
        scheme: "tamed" or "untamed"
        wall_clock: Seconds spent
    """
    levels: List[int]
    rms: List[float]
    se: List[float]
    fit: Optional[LogLogFit]
    samples: List[int]
    diverged: List[int]
    tamed_fraction: List[float]
    master_seed: int
    reference_steps: int
    scheme: str = "tamed"
    wall_clock: float = 0.0

    @property
    def slope(self) -> float:
        return self.fit.slope if self.fit is not None else math.nan

    @property
    def intercept(self) -> float:
        return self.fit.intercept if self.fit is not None else math.nan

    @property
    def total_diverged(self) -> int:
        return int(sum(self.diverged))

    def is_monotone(self, k: float = 2.0) -> bool:
        """RMS never grows with N by more than k standard errors."""
        return all(fine <= coarse + k * max(se_c, se_f)
                   for coarse, fine, se_c, se_f in zip(self.rms, self.rms[1:], self.se, self.se[1:]))

    def passes(self, low: float, high: float) -> bool:
        return self.fit is not None and low <= self.slope <= high and self.total_diverged == 0


def strong_rate_study(params: VdpParams, levels: Sequence[int], reference_steps: int, M: int,
                      seed: int, runner: Optional[MonteCarloRunner] = None, tamed: bool = True,
                      max_divergence: float = MAX_DIVERGENCE_FRACTION) -> ExperimentReport:
    """RMS terminal error of the scheme at each level against a fine coupled reference.

    With ``tamed=False`` the coarse schemes drop the taming indicator; diverged
    samples are then only counted, never fatal.

    Raises:
        DomainError: if a level does not divide ``reference_steps`` or
            reference_steps < 8 max(levels)
        ExcessiveDivergenceError: tamed runs only
    """
    levels = sorted(int(n) for n in levels)
    if not levels:
        raise DomainError("At least one level is required")
    if any(reference_steps % n for n in levels):
        raise DomainError(f"Every level must divide reference_steps={reference_steps}")
    if reference_steps < 8 * levels[-1]:
        raise DomainError(f"reference_steps={reference_steps} must be at least 8 x {levels[-1]}")
    started = time.perf_counter()
    setup = RateSetup(params, tuple(levels), int(reference_steps), int(seed), tamed)
    runner = runner or MonteCarloRunner()
    out = runner.run(strong_rate_worker, setup, M)

    bad = out['diverged']
    if tamed:
        guard_divergence(np.any(bad, axis=1), max_divergence)
    rms, se, samples, counts, fractions = [], [], [], [], []
    for j, n in enumerate(levels):
        keep = ~bad[:, j]
        value, err = rms_and_se(out['errors'][keep, j]) if keep.any() else (math.nan, math.nan)
        rms.append(value)
        se.append(err)
        samples.append(int(keep.sum()))
        counts.append(int((~keep).sum()))
        fractions.append(float(np.mean(out['tamed_fraction'][keep, j])) if keep.any() else math.nan)
        logger.info("N=%d: rms %.6g (se %.2g), %d diverged", n, value, err, counts[-1])

    usable = [(n, r) for n, r in zip(levels, rms) if np.isfinite(r) and r > 0]
    fit = loglog_fit(*zip(*usable)) if len(usable) >= 2 else None
    report = ExperimentReport(levels, rms, se, fit, samples, counts, fractions, int(seed),
                              int(reference_steps), "tamed" if tamed else "untamed",
                              time.perf_counter() - started)
    if fit is not None:
        logger.info("Fitted slope %.4f, intercept %.4f", fit.slope, fit.intercept)
    return report


@dataclass(frozen=True)
class TamingStudy:
    """Mean fraction of suppressed drift steps per level."""
    levels: List[int]
    fractions: List[float]
    ses: List[float]


def taming_fraction_study(params: VdpParams, levels: Sequence[int], M: int, seed: int,
                          runner: Optional[MonteCarloRunner] = None) -> TamingStudy:
    """How often the taming indicator fires; it should fall as N grows.

    All levels share paths drawn at the finest level, which every other
    level must divide.
    """
    levels = sorted(int(n) for n in levels)
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise DomainError(f"Every level must divide the finest level {finest}")
    setup = RateSetup(params, tuple(levels), finest, int(seed), True, "taming")
    runner = runner or MonteCarloRunner()
    out = runner.run(strong_rate_worker, setup, M)
    fractions, ses = [], []
    for j in range(len(levels)):
        est = mean_and_se(out['tamed_fraction'][:, j])
        fractions.append(float(est.mean))
        ses.append(float(est.se))
    return TamingStudy(levels, fractions, ses)
