"""Pathwise SDE/ODE flows, their variational processes, and the tamed Euler scheme.

The SDE flow X_{s,t}^x is integrated with Euler-Maruyama on the grid of the
driving Brownian path. With ``with_derivatives`` the first and second
variational processes are stepped jointly with the state (explicit Euler on
the same grid):

    dX1 = mu'(X) X1 dr,                          X1(s) = I
    dX2 = (mu''(X)(X1., X1.) + mu'(X) X2) dr,    X2(s) = 0

which is exact for additive noise, the only case supported with derivatives.

Batched kernels take a state array of shape S + (d,) together with per-entry
start nodes, so one pass over the fine grid advances every restarted flow of
every sample. Entries that have not reached their start node yet are held
fixed. Divergence never raises inside a kernel; it is reported through the
first non-finite step per entry.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .brownian import BrownianPath, coarsen_increments
from .exceptions import DivergedSampleError, DomainError
from .fields import DiffusionField, VectorField
from .grid import TimeGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Terminal value of one flow and its derivatives in the initial state.

    Attributes:
        X: X_{s,t}^x, shape (d,)
        X1: d/dx X_{s,t}^x, shape (d, d)
        X2: d^2/dx^2 X_{s,t}^x, shape (d, d, d) with X2[a, i, j] = d^2 X_a / dx_i dx_j
        start_index: Fine-grid node of s
        start_time: s
        start_state: x
        end_time: t
    """
    X: np.ndarray
    X1: Optional[np.ndarray]
    X2: Optional[np.ndarray]
    start_index: int
    start_time: float
    start_state: np.ndarray
    end_time: float


@dataclass(frozen=True, eq=False)
class FlowBatch:
    """Result of :func:`flow_solve_batch`.

    Attributes:
        X: States, shape S + (d,)
        X1: First derivatives, S + (d, d), or None
        X2: Second derivatives, S + (d, d, d), or None
        diverged_at: First non-finite step per entry, -1 if finite, shape S
    """
    X: np.ndarray
    X1: Optional[np.ndarray]
    X2: Optional[np.ndarray]
    diverged_at: np.ndarray

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_at >= 0


@dataclass(frozen=True, eq=False)
class SchemeTrajectory:
    """Tamed Euler trajectory on a scheme grid.

    Attributes:
        grid: Scheme grid
        states: Y_0 ... Y_N, shape (N + 1, d)
        drift_applied: Value of the taming indicator per step, shape (N,)
        drift_norm_sq: |mu(Y_k)|^2 per step, shape (N,)
        beta_column: Diffusion matrix (d, m)
        path: Driving path (on a grid refining ``grid``)
        drift_values: mu(Y_k) per step, shape (N, d)
    """
    grid: TimeGrid
    states: np.ndarray
    drift_applied: np.ndarray
    drift_norm_sq: np.ndarray
    beta_column: np.ndarray
    path: BrownianPath = field(repr=False)
    drift_values: np.ndarray = field(repr=False, default=None)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @property
    def tamed_steps(self) -> int:
        return int(np.count_nonzero(~self.drift_applied))

    @property
    def tamed_fraction(self) -> float:
        return self.tamed_steps / self.grid.steps_N

    def interpolate(self, fine_index: int) -> np.ndarray:
        """Y at the fine-grid node ``fine_index`` from the scheme's own update rule.

        Y_{kh+eps} = Y_k + mu(Y_k) eps 1{...} + (W_{kh+eps} - W_{kh}) beta,
        using the actual Brownian increment over [kh, kh+eps].
        """
        factor = self.path.grid.factor_over(self.grid)
        k = min(fine_index // factor, self.grid.steps_N - 1)
        if fine_index == k * factor:
            return self.states[k]
        eps = (fine_index - k * factor) * self.path.grid.h
        dw = self.path.increment_between(k * factor, fine_index)
        drift = self.drift_values[k] * eps if self.drift_applied[k] else 0.0
        return self.states[k] + drift + _matvec(self.beta_column, dw)


def _matvec(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(..., d, m) @ (..., m) with a fixed left-to-right accumulation order."""
    out = matrix[..., :, 0] * vec[..., np.newaxis, 0]
    for j in range(1, matrix.shape[-1]):
        out = out + matrix[..., :, j] * vec[..., np.newaxis, j]
    return out


def _squared_norm(v: np.ndarray) -> np.ndarray:
    out = v[..., 0] * v[..., 0]
    for i in range(1, v.shape[-1]):
        out = out + v[..., i] * v[..., i]
    return out


def _check_derivative_support(sigma: DiffusionField, with_derivatives: bool) -> None:
    if with_derivatives and not sigma.is_additive:
        raise DomainError(
            "Variational processes are only available for additive noise "
            "(diffusion constant in the state)"
        )


def flow_solve_batch(mu: VectorField, sigma: DiffusionField, s_indices, xs: np.ndarray,
                     increments: np.ndarray, grid: TimeGrid, with_derivatives: bool = True,
                     t_index: Optional[int] = None) -> FlowBatch:
    """Euler-Maruyama flows started at several nodes and states at once.

    Args:
        mu: Drift
        sigma: Diffusion
        s_indices: Start node per entry, integer array broadcastable to S
        xs: Start states, shape S + (d,)
        increments: Brownian increments on ``grid``, shape (N,) + S' + (m,)
            with S' broadcastable to S
        grid: Grid of the increments
        with_derivatives: Also integrate X1 and X2
        t_index: End node (default N); entries starting after it are returned unchanged

    Returns:
        FlowBatch at node ``t_index``
    """
    _check_derivative_support(sigma, with_derivatives)
    n = grid.steps_N
    end = n if t_index is None else int(t_index)
    if not 0 <= end <= n:
        raise DomainError(f"End node {end} outside 0..{n}")
    if increments.shape[0] != n:
        raise DomainError(f"Expected {n} increments, got {increments.shape[0]}")
    X = np.array(xs, dtype=float)
    batch_shape = X.shape[:-1]
    d = X.shape[-1]
    if d != mu.dimension:
        raise DomainError(f"State dimension {d} does not match drift dimension {mu.dimension}")
    starts = np.broadcast_to(np.asarray(s_indices, dtype=int), batch_shape)
    if starts.size and (starts.min() < 0 or starts.max() > n):
        raise DomainError(f"Start nodes must lie in 0..{n}")
    X1 = X2 = None
    if with_derivatives:
        X1 = np.broadcast_to(np.eye(d), batch_shape + (d, d)).copy()
        X2 = np.zeros(batch_shape + (d, d, d))
    diverged_at = np.full(batch_shape, -1, dtype=int)
    first = int(starts.min()) if starts.size else end
    h = grid.h

    with np.errstate(all='ignore'):
        for k in range(first, end):
            t = grid.node(k)
            active = starts <= k
            if not np.any(active):
                continue
            drift = mu.eval(t, X)
            noise = _matvec(np.asarray(sigma.eval(t, X)), increments[k])
            X_new = X + drift * h + noise
            if with_derivatives:
                J = mu.jacobian(t, X)
                H = mu.hessian(t, X)
                X1_new = X1 + h * np.einsum('...ab,...bj->...aj', J, X1)
                X2_new = X2 + h * (np.einsum('...abc,...bi,...cj->...aij', H, X1, X1)
                                   + np.einsum('...ab,...bij->...aij', J, X2))
                X1 = np.where(active[..., np.newaxis, np.newaxis], X1_new, X1)
                X2 = np.where(active[..., np.newaxis, np.newaxis, np.newaxis], X2_new, X2)
                finite = (np.all(np.isfinite(X_new), axis=-1)
                          & np.all(np.isfinite(X1_new), axis=(-2, -1))
                          & np.all(np.isfinite(X2_new), axis=(-3, -2, -1)))
            else:
                finite = np.all(np.isfinite(X_new), axis=-1)
            X = np.where(active[..., np.newaxis], X_new, X)
            newly = active & ~finite & (diverged_at < 0)
            if np.any(newly):
                diverged_at[newly] = k
    return FlowBatch(X, X1, X2, diverged_at)


def flow_solve(mu: VectorField, sigma: DiffusionField, s_index: int, x,
               path: BrownianPath, with_derivatives: bool = True,
               t_index: Optional[int] = None) -> FlowResult:
    """Solve the flow X_{s,t}^x along ``path`` from node ``s_index``.

    Args:
        mu: Drift field
        sigma: Diffusion field (must be additive when derivatives are requested)
        s_index: Start node on ``path.grid``
        x: Start state
        path: Driving Brownian path; its grid is the integration grid
        with_derivatives: Also return X1 and X2
        t_index: End node (default: terminal node)

    Returns:
        FlowResult at node ``t_index``

    Raises:
        DomainError: bad indices or dimensions, or derivatives with multiplicative noise
        DivergedSampleError: if the state became non-finite
    """
    grid = path.grid
    if not 0 <= s_index <= grid.steps_N:
        raise DomainError(f"Start node {s_index} outside 0..{grid.steps_N}")
    end = grid.steps_N if t_index is None else int(t_index)
    if end < s_index:
        raise DomainError(f"End node {end} precedes start node {s_index}")
    x = np.asarray(x, dtype=float).reshape(mu.dimension)
    batch = flow_solve_batch(mu, sigma, s_index, x, path.increments, grid,
                             with_derivatives, end)
    if batch.diverged_at >= 0:
        raise DivergedSampleError(int(batch.diverged_at), path.sample_index)
    return FlowResult(batch.X, batch.X1, batch.X2, s_index, grid.node(s_index), x,
                      grid.node(end))


def _tamed_steps(mu: VectorField, beta_column: np.ndarray, xi: np.ndarray,
                 increments: np.ndarray, grid: TimeGrid, tamed: bool, record: bool):
    """Run the (un)tamed scheme over increments of shape (N,) + B + (m,)."""
    n = grid.steps_N
    h = grid.h
    threshold = n / grid.horizon_T
    Y = np.broadcast_to(np.asarray(xi, dtype=float), increments.shape[1:-1] + (beta_column.shape[0],)).copy()
    batch_shape = Y.shape[:-1]
    states = np.empty((n + 1,) + Y.shape) if record else None
    applied_log = np.empty((n,) + batch_shape, dtype=bool) if record else None
    norm_log = np.empty((n,) + batch_shape) if record else None
    drift_log = np.empty((n,) + Y.shape) if record else None
    if record:
        states[0] = Y
    tamed_count = np.zeros(batch_shape, dtype=int)
    diverged_at = np.full(batch_shape, -1, dtype=int)
    with np.errstate(all='ignore'):
        for k in range(n):
            drift = mu.eval(grid.node(k), Y)
            nsq = _squared_norm(drift)
            applied = nsq < threshold if tamed else np.ones(batch_shape, dtype=bool)
            Y = (Y + np.where(applied[..., np.newaxis], drift * h, 0.0)
                 + _matvec(beta_column, increments[k]))
            tamed_count += ~applied
            newly = ~np.all(np.isfinite(Y), axis=-1) & (diverged_at < 0)
            if np.any(newly):
                diverged_at[newly] = k
            if record:
                states[k + 1] = Y
                applied_log[k] = applied
                norm_log[k] = nsq
                drift_log[k] = drift
    return Y, tamed_count, diverged_at, states, applied_log, norm_log, drift_log


def _as_beta(beta_column, d: int) -> np.ndarray:
    beta = np.atleast_2d(np.asarray(beta_column, dtype=float))
    if beta.shape[0] != d and beta.shape[1] == d:
        beta = beta.T
    if beta.shape[0] != d:
        raise DomainError(f"Diffusion column of shape {beta.shape} does not match dimension {d}")
    return beta


def tamed_euler(mu: VectorField, beta_column, xi, grid: TimeGrid, path: BrownianPath,
                tamed: bool = True) -> SchemeTrajectory:
    """Tamed Euler scheme with additive noise on ``grid``.

    Y_{k+1} = Y_k + mu(Y_k) h 1{|mu(Y_k)|^2 < N/T} + beta dW_k, where dW_k are
    block sums of the increments of ``path``.

    Args:
        mu: Drift
        beta_column: Constant diffusion matrix (d x m)
        xi: Initial value
        grid: Scheme grid; ``path.grid`` must refine it
        path: Driving path
        tamed: False drops the indicator (plain Euler-Maruyama)

    Returns:
        SchemeTrajectory with every node state and the taming record
    """
    factor = path.grid.factor_over(grid)
    beta = _as_beta(beta_column, mu.dimension)
    if beta.shape[1] != path.dimension_m:
        raise DomainError(f"Diffusion has {beta.shape[1]} noise columns, path has {path.dimension_m}")
    increments = coarsen_increments(path.increments, factor)
    xi = np.asarray(xi, dtype=float).reshape(mu.dimension)
    _, _, _, states, applied, norms, drifts = _tamed_steps(mu, beta, xi, increments, grid,
                                                          tamed, record=True)
    return SchemeTrajectory(grid, states, applied, norms, beta, path, drifts)


@dataclass(frozen=True, eq=False)
class SchemeBatch:
    """Terminal states of a batch of scheme runs.

    Attributes:
        terminal: Y_N per sample, shape (B, d)
        tamed_steps: Number of suppressed drift steps per sample
        diverged_at: First non-finite step, -1 when finite
        states: All node states (N + 1, B, d) when recorded
    """
    terminal: np.ndarray
    tamed_steps: np.ndarray
    diverged_at: np.ndarray
    states: Optional[np.ndarray] = None


def tamed_euler_batch(mu: VectorField, beta_column, xi, grid: TimeGrid,
                      increments: np.ndarray, tamed: bool = True,
                      record: bool = False) -> SchemeBatch:
    """Vectorized :func:`tamed_euler` over samples.

    Args:
        increments: Fine increments of shape (N_fine, B, m); N_fine must be a
            multiple of ``grid.steps_N``
    """
    n_fine = increments.shape[0]
    if n_fine % grid.steps_N != 0:
        raise DomainError(f"{n_fine} fine steps are not a multiple of {grid.steps_N}")
    beta = _as_beta(beta_column, mu.dimension)
    coarse = coarsen_increments(increments, n_fine // grid.steps_N)
    Y, tamed_count, diverged_at, states, _, _, _ = _tamed_steps(mu, beta, xi, coarse, grid,
                                                              tamed, record)
    return SchemeBatch(Y, tamed_count, diverged_at, states)


def reference_solution(mu: VectorField, sigma: DiffusionField, xi,
                       path: BrownianPath) -> np.ndarray:
    """Coupling reference for X_{0,T}^xi: tamed Euler on the path's own grid.

    Raises:
        DomainError: if ``sigma`` is not additive
        DivergedSampleError: if the reference became non-finite
    """
    if not sigma.is_additive:
        raise DomainError("The tamed reference requires additive noise")
    xi = np.asarray(xi, dtype=float).reshape(mu.dimension)
    beta = np.asarray(sigma.eval(0.0, xi))
    traj = tamed_euler(mu, beta, xi, path.grid, path)
    bad = np.flatnonzero(~np.all(np.isfinite(traj.states[1:]), axis=-1))
    if bad.size:
        raise DivergedSampleError(int(bad[0]), path.sample_index)
    return traj.terminal


def _ode_rhs(mu: VectorField, t, x, X1, X2, with_derivatives: bool):
    dx = mu.eval(t, x)
    if not with_derivatives:
        return dx, None, None
    J = mu.jacobian(t, x)
    H = mu.hessian(t, x)
    dX1 = np.einsum('...ab,...bj->...aj', J, X1)
    dX2 = (np.einsum('...abc,...bi,...cj->...aij', H, X1, X1)
           + np.einsum('...ab,...bij->...aij', J, X2))
    return dx, dX1, dX2


@dataclass(frozen=True, eq=False)
class OdeFlowBatch:
    """ODE flows X_{s,T}^x with derivatives for a batch of (s, x)."""
    X: np.ndarray
    X1: Optional[np.ndarray]
    X2: Optional[np.ndarray]


def ode_flow(mu: VectorField, s: Union[float, np.ndarray], x: np.ndarray, T: float,
             steps: int, with_derivatives: bool = True) -> OdeFlowBatch:
    """Classical fourth-order Runge-Kutta flow of dx/dt = mu(t, x) from s to T.

    Every entry uses ``steps`` uniform steps of its own size (T - s) / steps,
    so a whole family of start times advances in one vectorized loop.

    Args:
        mu: Drift field
        s: Start times, shape S (or scalar)
        x: Start states, shape S + (d,)
        T: End time
        steps: Number of steps per entry
        with_derivatives: Integrate X1, X2 alongside

    Returns:
        OdeFlowBatch at time T
    """
    if steps < 1:
        raise DomainError(f"Number of steps must be positive, got {steps}")
    X = np.array(x, dtype=float)
    batch_shape = X.shape[:-1]
    d = X.shape[-1]
    s = np.broadcast_to(np.asarray(s, dtype=float), batch_shape)
    if np.any(s > T):
        raise DomainError("Start times must not exceed the end time")
    h = ((T - s) / steps)[..., np.newaxis]
    X1 = X2 = None
    if with_derivatives:
        X1 = np.broadcast_to(np.eye(d), batch_shape + (d, d)).copy()
        X2 = np.zeros(batch_shape + (d, d, d))
    h1 = h[..., np.newaxis]
    h2 = h1[..., np.newaxis]
    with np.errstate(all='ignore'):
        for i in range(steps):
            t = s + i * h[..., 0]
            th = t + 0.5 * h[..., 0]
            k1 = _ode_rhs(mu, t, X, X1, X2, with_derivatives)
            k2 = _ode_rhs(mu, th, X + 0.5 * h * k1[0],
                          None if X1 is None else X1 + 0.5 * h1 * k1[1],
                          None if X2 is None else X2 + 0.5 * h2 * k1[2], with_derivatives)
            k3 = _ode_rhs(mu, th, X + 0.5 * h * k2[0],
                          None if X1 is None else X1 + 0.5 * h1 * k2[1],
                          None if X2 is None else X2 + 0.5 * h2 * k2[2], with_derivatives)
            k4 = _ode_rhs(mu, t + h[..., 0], X + h * k3[0],
                          None if X1 is None else X1 + h1 * k3[1],
                          None if X2 is None else X2 + h2 * k3[2], with_derivatives)
            X = X + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            if with_derivatives:
                X1 = X1 + h1 / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
                X2 = X2 + h2 / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            if not np.all(np.isfinite(X)):
                raise DivergedSampleError(i, message=f"ODE flow became non-finite at step {i}")
    return OdeFlowBatch(X, X1, X2)
