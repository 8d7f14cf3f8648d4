"""Stochastic Ito-Alekseev-Groebner identity, evaluated term by term.

For an Ito process dY = A dr + B dW driven by the same Wiener process as the
SDE dX = mu(r, X) dr + sigma(r, X) dW,

    f(X_{0,T}^{Y_0}) - f(Y_T)
        = int f'(X_{r,T}^{Y_r}) X1 (mu(r, Y_r) - A_r) dr                  (Lebesgue term)
        + int f'(X_{r,T}^{Y_r}) X1 (sigma(r, Y_r) - B_r) dW_r             (Skorohod term)
        + 1/2 sum_ij int (sigma sigma* - B B*)_ij
              (f''(X)(X1 e_i, X1 e_j) + f'(X) X2(e_i, e_j)) dr          (trace term)

The integrands read X_{r,T}^{Y_r}, i.e. the future of the path, so the middle
integral is anticipating. It has no pathwise evaluation here: it is taken as
the residual lhs - Lebesgue - trace and validated statistically (zero mean and
the duality E[Z delta(u)] = E[int D_r Z u_r dr]).

Both dr-integrals are left-point Riemann sums over the outer grid. Each outer
node restarts the flow from (r, Y_r) on the fine grid of the same path.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .brownian import BrownianPath, coarsen_increments, sample_brownian
from .exceptions import DivergedSampleError, DomainError
from .fields import DiffusionField, TestFunction, VectorField
from .flows import _matvec, _squared_norm, flow_solve_batch
from .grid import TimeGrid
from .runner import MonteCarloRunner, guard_divergence
from ..config.defaults import MAX_DIVERGENCE_FRACTION
from ..utils.helpers import mean_and_se, rms_and_se

logger = logging.getLogger(__name__)

TERMS = ('lhs', 'lebesgue_term', 'trace_term', 'skorohod_residual')


class ItoProcessSpec(ABC):
    """Ito process Y_t = xi + int A ds + int B dW realized on an outer grid.

    ``drift`` and ``diffusion`` are evaluated at outer step k and may read the
    trajectory ``history`` (states at outer nodes 0..k, shape (k + 1, ..., d))
    but nothing later: A_k and B_k are predictable.
    """

    xi: np.ndarray
    dimension: int = 1
    noise_dimension: int = 1

    def check_grid(self, grid: TimeGrid) -> None:
        """Raise DomainError when the process cannot live on ``grid``."""

    @abstractmethod
    def drift(self, k: int, grid: TimeGrid, y: np.ndarray, history: np.ndarray) -> np.ndarray:
        """A_k, shape (..., d)."""

    @abstractmethod
    def diffusion(self, k: int, grid: TimeGrid, y: np.ndarray, history: np.ndarray) -> np.ndarray:
        """B_k, shape (..., d, m)."""


class ConstantItoProcess(ItoProcessSpec):
    """A and B constant: Y_t = xi + a t + b W_t."""

    def __init__(self, xi, a, b):
        self.xi = np.atleast_1d(np.asarray(xi, dtype=float))
        self.dimension = self.xi.shape[0]
        self.a = np.broadcast_to(np.asarray(a, dtype=float), (self.dimension,)).copy()
        self.b = np.atleast_2d(np.asarray(b, dtype=float)).reshape(self.dimension, -1)
        self.noise_dimension = self.b.shape[1]

    def drift(self, k, grid, y, history):
        return np.broadcast_to(self.a, y.shape).copy()

    def diffusion(self, k, grid, y, history):
        return np.broadcast_to(self.b, y.shape[:-1] + self.b.shape).copy()


class EulerMaruyamaProcess(ItoProcessSpec):
    """A_k = mu(t_k, Y_k), B_k = sigma(t_k, Y_k): the Euler scheme of the SDE itself."""

    def __init__(self, mu: VectorField, sigma: DiffusionField, xi):
        self.mu = mu
        self.sigma = sigma
        self.xi = np.asarray(xi, dtype=float).reshape(mu.dimension)
        self.dimension = mu.dimension
        self.noise_dimension = sigma.noise_dimension

    def drift(self, k, grid, y, history):
        return self.mu.eval(grid.node(k), y)

    def diffusion(self, k, grid, y, history):
        return np.asarray(self.sigma.eval(grid.node(k), y))


class TamedSchemeProcess(ItoProcessSpec):
    """The tamed Euler scheme with N scheme steps seen as an Ito process.

    On [t_j, t_{j+1}] of the scheme grid, A_r = mu(Y_{t_j}) 1{|mu(Y_{t_j})|^2 < N/T}
    and B_r = beta. Realized on an outer grid refining the scheme grid, the
    outer states are the scheme's own intra-step values.
    """

    def __init__(self, mu: VectorField, beta_column, xi, scheme_steps: int, tamed: bool = True):
        self.mu = mu
        self.beta = np.atleast_2d(np.asarray(beta_column, dtype=float)).reshape(mu.dimension, -1)
        self.xi = np.asarray(xi, dtype=float).reshape(mu.dimension)
        self.dimension = mu.dimension
        self.noise_dimension = self.beta.shape[1]
        self.scheme_steps = int(scheme_steps)
        self.tamed = tamed

    def check_grid(self, grid):
        if grid.steps_N % self.scheme_steps != 0:
            raise DomainError(
                f"Outer grid with {grid.steps_N} steps does not refine the scheme grid "
                f"with {self.scheme_steps} steps"
            )

    def drift(self, k, grid, y, history):
        factor = grid.steps_N // self.scheme_steps
        anchor = history[(k // factor) * factor]
        value = self.mu.eval(grid.node((k // factor) * factor), anchor)
        if not self.tamed:
            return value
        applied = _squared_norm(value) < self.scheme_steps / grid.horizon_T
        return np.where(applied[..., np.newaxis], value, 0.0)

    def diffusion(self, k, grid, y, history):
        return np.broadcast_to(self.beta, y.shape[:-1] + self.beta.shape).copy()


@dataclass(frozen=True, eq=False)
class ItoRealization:
    """Outer-grid trajectory of an Ito process.

    Attributes:
        states: Y at outer nodes, shape (K + 1, ..., d)
        drift: A_k, shape (K, ..., d)
        diffusion: B_k, shape (K, ..., d, m)
    """
    states: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray


def realize_ito(ito: ItoProcessSpec, grid: TimeGrid, increments: np.ndarray) -> ItoRealization:
    """Y_{k+1} = Y_k + A_k H + B_k dW_k on the outer grid.

    Args:
        ito: Process specification
        grid: Outer grid
        increments: Outer increments, shape (K, ..., m)
    """
    ito.check_grid(grid)
    K = grid.steps_N
    if increments.shape[0] != K:
        raise DomainError(f"Expected {K} outer increments, got {increments.shape[0]}")
    batch_shape = increments.shape[1:-1]
    d = ito.dimension
    states = np.empty((K + 1,) + batch_shape + (d,))
    drift = np.empty((K,) + batch_shape + (d,))
    diffusion = np.empty((K,) + batch_shape + (d, ito.noise_dimension))
    states[0] = np.broadcast_to(ito.xi, batch_shape + (d,))
    H = grid.h
    with np.errstate(all='ignore'):
        for k in range(K):
            y = states[k]
            a = ito.drift(k, grid, y, states[:k + 1])
            b = ito.diffusion(k, grid, y, states[:k + 1])
            drift[k] = a
            diffusion[k] = b
            states[k + 1] = y + a * H + _matvec(b, increments[k])
    return ItoRealization(states, drift, diffusion)


@dataclass(frozen=True, eq=False)
class IagBatch:
    """Per-sample terms of the identity for a batch of paths.

    Node-indexed arrays have shape (B, K, ...); terms have shape (B, k).
    """
    lhs: np.ndarray
    lebesgue_term: np.ndarray
    trace_term: np.ndarray
    skorohod_residual: np.ndarray
    node_times: np.ndarray
    weight: np.ndarray
    lebesgue_integrand: np.ndarray
    trace_integrand: np.ndarray
    skorohod_integrand: np.ndarray
    realization: ItoRealization
    diverged: np.ndarray


@dataclass(frozen=True, eq=False)
class IagTerms:
    """Terms of the identity on one path.

    ``skorohod_residual`` is defined as ``lhs - (lebesgue_term + trace_term)``.

    Attributes:
        lhs: f(X_{0,T}^{Y_0}) - f(Y_T), shape (k,)
        lebesgue_term: shape (k,)
        trace_term: shape (k,)
        skorohod_residual: shape (k,)
        node_times: Outer nodes r_0 .. r_{K-1}
        weight: f'(X_{r,T}^{Y_r}) X1_{r,T}^{Y_r} per node, shape (K, k, d)
        lebesgue_integrand: shape (K, k)
        trace_integrand: shape (K, k)
        skorohod_integrand: u_r = weight (sigma - B), shape (K, k, m)
        states: Y at outer nodes (K + 1, d)
        drift: A per outer step (K, d)
        diffusion: B per outer step (K, d, m)
    """
    lhs: np.ndarray
    lebesgue_term: np.ndarray
    trace_term: np.ndarray
    skorohod_residual: np.ndarray
    node_times: np.ndarray
    weight: np.ndarray
    lebesgue_integrand: np.ndarray
    trace_integrand: np.ndarray
    skorohod_integrand: np.ndarray
    states: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray


def _left_riemann(integrand: np.ndarray, H: float) -> np.ndarray:
    """H * sum over axis 1, accumulated node by node."""
    total = np.zeros(integrand.shape[:1] + integrand.shape[2:])
    for j in range(integrand.shape[1]):
        total = total + integrand[:, j]
    return H * total


def iag_terms_batch(mu: VectorField, sigma: DiffusionField, ito: ItoProcessSpec,
                    f: TestFunction, increments: np.ndarray, fine_grid: TimeGrid,
                    outer_steps: int) -> IagBatch:
    """Evaluate the identity's terms for a batch of paths.

    Args:
        increments: Fine increments, shape (N, B, m)
        fine_grid: Grid of the increments
        outer_steps: Outer quadrature steps K; must divide N
    """
    N = fine_grid.steps_N
    if outer_steps < 1 or N % outer_steps != 0:
        raise DomainError(f"Outer steps {outer_steps} must divide fine steps {N}")
    if ito.dimension != mu.dimension or ito.noise_dimension != sigma.noise_dimension:
        raise DomainError("Ito process and SDE dimensions differ")
    q = N // outer_steps
    outer = TimeGrid(fine_grid.horizon_T, outer_steps)
    H = outer.h
    real = realize_ito(ito, outer, coarsen_increments(increments, q))
    Y = real.states                                       # (K+1, B, d)
    B_count = increments.shape[1]
    K = outer_steps

    starts = np.broadcast_to(np.arange(K) * q, (B_count, K))
    xs = np.swapaxes(Y[:K], 0, 1)                         # (B, K, d)
    flows = flow_solve_batch(mu, sigma, starts, xs, increments[:, :, np.newaxis, :],
                             fine_grid, with_derivatives=True)
    times = outer.nodes()[:K]
    t_col = times[np.newaxis, :]
    with np.errstate(all='ignore'):
        mu_y = mu.eval(t_col, xs)
        sig_y = np.asarray(sigma.eval(t_col, xs))
        A = np.swapaxes(real.drift, 0, 1)
        Bm = np.swapaxes(real.diffusion, 0, 1)
        F1 = f.gradient(flows.X)
        F2 = f.hessian(flows.X)
        weight = np.einsum('...ka,...ab->...kb', F1, flows.X1)
        leb_int = np.einsum('...kb,...b->...k', weight, mu_y - A)
        Q = (np.einsum('...im,...jm->...ij', sig_y, sig_y)
             - np.einsum('...im,...jm->...ij', Bm, Bm))
        second = (np.einsum('...lab,...ai,...bj->...lij', F2, flows.X1, flows.X1)
                  + np.einsum('...la,...aij->...lij', F1, flows.X2))
        trace_int = 0.5 * np.einsum('...ij,...lij->...l', Q, second)
        sko_int = np.einsum('...kb,...bm->...km', weight, sig_y - Bm)

        lhs = f.value(flows.X[:, 0]) - f.value(Y[K])
        lebesgue = _left_riemann(leb_int, H)
        trace = _left_riemann(trace_int, H)
        residual = lhs - (lebesgue + trace)
    diverged = (np.any(flows.diverged, axis=1)
                | ~np.all(np.isfinite(Y), axis=(0, 2))
                | ~np.all(np.isfinite(residual), axis=-1))
    return IagBatch(lhs, lebesgue, trace, residual, times, weight, leb_int, trace_int,
                    sko_int, real, diverged)


def iag_terms(mu: VectorField, sigma: DiffusionField, ito: ItoProcessSpec, f: TestFunction,
              path: BrownianPath, outer_steps: int) -> IagTerms:
    """Evaluate the identity's terms along one Brownian path.

    Raises:
        DomainError: incompatible grids, dimensions or multiplicative noise
        DivergedSampleError: if a restarted flow or Y became non-finite
    """
    batch = iag_terms_batch(mu, sigma, ito, f, path.increments[:, np.newaxis, :], path.grid,
                            outer_steps)
    if batch.diverged[0]:
        raise DivergedSampleError(-1, path.sample_index, "Sample diverged while evaluating the identity")
    real = batch.realization
    return IagTerms(batch.lhs[0], batch.lebesgue_term[0], batch.trace_term[0],
                    batch.skorohod_residual[0], batch.node_times, batch.weight[0],
                    batch.lebesgue_integrand[0], batch.trace_integrand[0],
                    batch.skorohod_integrand[0], real.states[:, 0], real.drift[:, 0],
                    real.diffusion[:, 0])


@dataclass(frozen=True)
class IagSetup:
    """Everything a worker needs to evaluate the identity for given samples."""
    mu: VectorField
    sigma: DiffusionField
    ito: ItoProcessSpec
    f: TestFunction
    horizon: float
    fine_steps: int
    outer_steps: int
    seed: int
    tag: str = "iag"

    @property
    def fine_grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.fine_steps)


def _paths(setup: IagSetup, indices: np.ndarray) -> List[BrownianPath]:
    grid = setup.fine_grid
    return [sample_brownian(setup.seed, int(i), grid, setup.sigma.noise_dimension, setup.tag)
            for i in indices]


def iag_batch_worker(setup: IagSetup, indices: np.ndarray) -> Dict[str, np.ndarray]:
    """Runner batch function: terms and W_T for the given samples."""
    paths = _paths(setup, indices)
    increments = np.stack([p.increments for p in paths], axis=1)
    batch = iag_terms_batch(setup.mu, setup.sigma, setup.ito, setup.f, increments,
                            setup.fine_grid, setup.outer_steps)
    terminal = np.stack([p.terminal for p in paths])
    return {
        'lhs': batch.lhs,
        'lebesgue_term': batch.lebesgue_term,
        'trace_term': batch.trace_term,
        'skorohod_residual': batch.skorohod_residual,
        'u_time_integral': _left_riemann(batch.skorohod_integrand, setup.fine_grid.horizon_T / setup.outer_steps),
        'terminal_w': terminal,
        'diverged': batch.diverged,
    }


@dataclass(frozen=True)
class TermStatistics:
    """Monte-Carlo mean and standard error of every identity term.

    Attributes:
        means: term name -> mean vector (k,)
        ses: term name -> standard error vector (k,)
        samples: Samples used (diverged excluded)
        diverged: Samples excluded
        passes: |mean(skorohod_residual)| <= z * SE componentwise
    """
    means: Dict[str, np.ndarray]
    ses: Dict[str, np.ndarray]
    samples: int
    diverged: int
    passes: bool
    z_threshold: float = 3.0


def weak_identity_check(setup: IagSetup, M: int, runner: Optional[MonteCarloRunner] = None,
                        z_threshold: float = 3.0,
                        max_divergence: float = MAX_DIVERGENCE_FRACTION) -> TermStatistics:
    """Monte-Carlo means of every term; the Skorohod residual must average to zero.

    Raises:
        DomainError: if M < 100
        ExcessiveDivergenceError: if more than ``max_divergence`` of samples diverged
    """
    if M < 100:
        raise DomainError(f"The weak identity check needs at least 100 samples, got {M}")
    runner = runner or MonteCarloRunner()
    out = runner.run(iag_batch_worker, setup, M)
    diverged = guard_divergence(out['diverged'], max_divergence)
    keep = ~out['diverged']
    means, ses = {}, {}
    for term in TERMS:
        est = mean_and_se(out[term][keep])
        means[term], ses[term] = est.mean, est.se
    passes = bool(np.all(np.abs(means['skorohod_residual']) <= z_threshold * ses['skorohod_residual']))
    logger.info("Weak identity: residual mean %s, SE %s, pass=%s",
                means['skorohod_residual'], ses['skorohod_residual'], passes)
    return TermStatistics(means, ses, int(keep.sum()), diverged, passes, z_threshold)


def constant_case_expectations(xi: float, a: float, b: float, sigma: float, T: float) -> Dict[str, float]:
    """Exact expectations of the terms for d = m = 1, mu = 0, f(x) = x^2.

    With X_{0,T} = xi + sigma W_T and Y_T = xi + a T + b W_T.
    """
    return {
        'lhs': sigma ** 2 * T - b ** 2 * T - 2 * a * xi * T - a ** 2 * T ** 2,
        'lebesgue_term': -2 * a * xi * T - a ** 2 * T ** 2,
        'trace_term': (sigma ** 2 - b ** 2) * T,
        'skorohod_residual': 0.0,
    }


class Functional:
    """Z = g(W_T) with Malliavin derivative D_r Z = g'(W_T), constant in r."""

    def __init__(self, name: str, value, derivative):
        self.name = name
        self.value = value
        self.derivative = derivative


FUNCTIONALS = {
    'constant': Functional('constant', lambda w: np.ones(w.shape[:-1]), np.zeros_like),
    'identity': Functional('identity', lambda w: w[..., 0],
                           lambda w: np.concatenate([np.ones_like(w[..., :1]), np.zeros_like(w[..., 1:])], axis=-1)),
    'sine': Functional('sine', lambda w: np.sin(w[..., 0]),
                       lambda w: np.concatenate([np.cos(w[..., :1]), np.zeros_like(w[..., 1:])], axis=-1)),
    'square': Functional('square', lambda w: np.sum(w * w, axis=-1), lambda w: 2.0 * w),
}


@dataclass(frozen=True)
class DualityStatistics:
    """E[Z skorohod_residual] against E[int D_r Z . u_r dr], per output component."""
    functional: str
    lhs_mean: np.ndarray
    lhs_se: np.ndarray
    rhs_mean: np.ndarray
    rhs_se: np.ndarray
    gap: np.ndarray
    combined_se: np.ndarray
    samples: int
    diverged: int
    passes: bool


def _check_constant_coefficients(setup: IagSetup) -> None:
    if not isinstance(setup.ito, ConstantItoProcess) or not setup.sigma.is_additive:
        raise DomainError("The duality check needs constant A, B and additive sigma")
    jac = setup.mu.jacobian(0.0, setup.ito.xi)
    if np.any(jac != 0):
        raise DomainError("The duality check needs a constant drift")


def skorohod_duality_check(setup: IagSetup, functional: str, M: int,
                           runner: Optional[MonteCarloRunner] = None, z_threshold: float = 3.0,
                           max_divergence: float = MAX_DIVERGENCE_FRACTION) -> DualityStatistics:
    """Monte-Carlo check of E[Z delta(u)] = E[int <D_r Z, u_r> dr] with delta(u)
    taken as the identity's residual.

    Args:
        setup: Constant-coefficient setup
        functional: One of ``FUNCTIONALS``
        M: Number of samples
    """
    _check_constant_coefficients(setup)
    if functional not in FUNCTIONALS:
        raise DomainError(f"Unknown functional '{functional}'; choose from {sorted(FUNCTIONALS)}")
    if M < 100:
        raise DomainError(f"The duality check needs at least 100 samples, got {M}")
    fn = FUNCTIONALS[functional]
    runner = runner or MonteCarloRunner()
    out = runner.run(iag_batch_worker, setup, M)
    diverged = guard_divergence(out['diverged'], max_divergence)
    keep = ~out['diverged']
    w = out['terminal_w'][keep]
    z = fn.value(w)                                       # (M,)
    dz = fn.derivative(w)                                 # (M, m)
    lhs_samples = z[:, np.newaxis] * out['skorohod_residual'][keep]
    rhs_samples = np.einsum('nkm,nm->nk', out['u_time_integral'][keep], dz)
    lhs = mean_and_se(lhs_samples)
    rhs = mean_and_se(rhs_samples)
    diff = mean_and_se(lhs_samples - rhs_samples)
    passes = bool(np.all(np.abs(diff.mean) <= z_threshold * diff.se))
    logger.info("Duality (%s): lhs %s, rhs %s, gap SE %s, pass=%s",
                functional, lhs.mean, rhs.mean, diff.se, passes)
    return DualityStatistics(functional, lhs.mean, lhs.se, rhs.mean, rhs.se, diff.mean, diff.se,
                             int(keep.sum()), diverged, passes)


@dataclass(frozen=True)
class RefinementLevel:
    """Pathwise residual size at one outer resolution."""
    outer_steps: int
    rms_residual: float
    se: float
    rms_lhs: float
    rms_lebesgue: float
    samples: int
    diverged: int


@dataclass(frozen=True)
class RefinementStudy:
    levels: List[RefinementLevel]
    ratios: List[float]
    median_sample_ratios: List[float]

    def passes(self, low: float, high: float) -> bool:
        return all(low <= r <= high for r in self.ratios)


def pathwise_refinement_study(mu: VectorField, sigma: DiffusionField, ito: ItoProcessSpec,
                              f: TestFunction, T: float, fine_steps: int,
                              outer_levels: Sequence[int], M: int, seed: int,
                              tag: str = "iag-pathwise") -> RefinementStudy:
    """RMS of the per-sample residual as the outer grid is refined, same paths at every level.

    Besides the residual, the RMS of the left-hand side (the global error when f
    is the identity) and of the Lebesgue term are reported: with matched
    diffusion they carry the whole error up to the residual.
    """
    grid = TimeGrid(T, fine_steps)
    paths = [sample_brownian(seed, i, grid, sigma.noise_dimension, tag) for i in range(M)]
    increments = np.stack([p.increments for p in paths], axis=1)
    levels, norms = [], []
    for K in outer_levels:
        batch = iag_terms_batch(mu, sigma, ito, f, increments, grid, K)
        keep = ~batch.diverged
        res_norm = np.linalg.norm(batch.skorohod_residual[keep], axis=-1)
        rms, se = rms_and_se(res_norm)
        rms_lhs, _ = rms_and_se(np.linalg.norm(batch.lhs[keep], axis=-1))
        rms_leb, _ = rms_and_se(np.linalg.norm(batch.lebesgue_term[keep], axis=-1))
        levels.append(RefinementLevel(K, rms, se, rms_lhs, rms_leb, int(keep.sum()),
                                      int(batch.diverged.sum())))
        norms.append(np.where(keep, np.linalg.norm(batch.skorohod_residual, axis=-1), np.nan))
        logger.info("Outer %d: RMS residual %.3e (SE %.1e)", K, rms, se)
    ratios = [c.rms_residual / fnr.rms_residual if fnr.rms_residual > 0 else math.inf
              for c, fnr in zip(levels, levels[1:])]
    medians = []
    for coarse, fine in zip(norms, norms[1:]):
        with np.errstate(divide='ignore', invalid='ignore'):
            medians.append(float(np.nanmedian(coarse / fine)))
    return RefinementStudy(levels, ratios, medians)


@dataclass(frozen=True)
class AnticipationAudit:
    """Effect of changing the increments after an outer node.

    Attributes:
        node: Outer node r_k that was checked
        predictable_unchanged: A_j, B_j for j <= k identical after the change
        weight_changed: f'(X_{r,T}^{Y_r}) X1 at r_k changed
        lebesgue_changed: Lebesgue integrand at r_k changed
        trace_changed: trace integrand at r_k changed
    """
    node: int
    predictable_unchanged: bool
    weight_changed: bool
    lebesgue_changed: bool
    trace_changed: bool


def anticipation_audit(mu: VectorField, sigma: DiffusionField, ito: ItoProcessSpec,
                       f: TestFunction, path: BrownianPath, outer_steps: int,
                       node: int) -> AnticipationAudit:
    """Flip the sign of every fine increment after outer node ``node`` and compare."""
    if not 0 <= node < outer_steps:
        raise DomainError(f"Node {node} outside 0..{outer_steps - 1}")
    q = path.grid.steps_N // outer_steps
    before = iag_terms(mu, sigma, ito, f, path, outer_steps)
    flipped = np.array(path.increments)
    flipped[node * q:] *= -1.0
    after = iag_terms(mu, sigma, ito, f, path.with_increments(flipped), outer_steps)
    same_pred = (np.array_equal(before.drift[:node + 1], after.drift[:node + 1])
                 and np.array_equal(before.diffusion[:node + 1], after.diffusion[:node + 1]))
    return AnticipationAudit(
        node,
        same_pred,
        not np.array_equal(before.weight[node], after.weight[node]),
        not np.array_equal(before.lebesgue_integrand[node], after.lebesgue_integrand[node]),
        not np.array_equal(before.trace_integrand[node], after.trace_integrand[node]),
    )
