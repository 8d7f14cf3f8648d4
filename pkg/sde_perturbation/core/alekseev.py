"""Deterministic Alekseev-Groebner identity for general test functions.

For dx/dt = mu(t, x) with flow X_{s,t}^x and a perturbed trajectory
dY/ds = g(s, Y):

    f(X_{0,T}^{Y_0}) - f(Y_T) = int_0^T f'(X_{s,T}^{Y_s}) X1_{s,T}^{Y_s} (mu(s, Y_s) - g(s, Y_s)) ds

Both sides are evaluated numerically: the flows with the classical fourth-order
Runge-Kutta method, the outer integral with the composite midpoint rule.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .exceptions import DomainError
from .fields import TestFunction, VectorField
from .flows import _ode_rhs, ode_flow
from ..config.defaults import DEFAULT_AG_MIN_RATIO
from ..utils.helpers import relative_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgResult:
    """Both sides of the identity and their difference.

    Attributes:
        lhs: f(X_{0,T}^{Y_0}) - f(Y_T)
        rhs: Midpoint quadrature of the flow-weighted defect
        residual: lhs - rhs
        lhs_halving_gap: |lhs - lhs with doubled inner resolution|
        outer_steps: Number of quadrature nodes
        inner_steps: Runge-Kutta steps per flow solve
    """
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    lhs_halving_gap: float
    outer_steps: int
    inner_steps: int

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))


def rk4_trajectory(field: VectorField, y0: np.ndarray, T: float, steps: int) -> np.ndarray:
    """Classical Runge-Kutta solution of dy/dt = field(t, y) at all ``steps + 1`` nodes."""
    h = T / steps
    y = np.array(y0, dtype=float)
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    for i in range(steps):
        t = i * h
        k1 = _ode_rhs(field, t, y, None, None, False)[0]
        k2 = _ode_rhs(field, t + 0.5 * h, y + 0.5 * h * k1, None, None, False)[0]
        k3 = _ode_rhs(field, t + 0.5 * h, y + 0.5 * h * k2, None, None, False)[0]
        k4 = _ode_rhs(field, t + h, y + h * k3, None, None, False)[0]
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = y
    return out


def _lhs(mu: VectorField, y_drift: VectorField, y0: np.ndarray, f: TestFunction,
         T: float, outer_steps: int, inner_steps: int):
    # Y lives on a grid whose nodes include every quadrature midpoint
    per_half = max(1, math.ceil(inner_steps / (2 * outer_steps)))
    y_path = rk4_trajectory(y_drift, y0, T, 2 * outer_steps * per_half)
    x_T = ode_flow(mu, 0.0, y0, T, inner_steps, with_derivatives=False).X
    return f.value(x_T) - f.value(y_path[-1]), y_path, per_half


def ag_residual(mu: VectorField, y_drift: VectorField, y0, f: TestFunction, T: float,
                outer_steps: int, inner_steps: int) -> AgResult:
    """Evaluate both sides of the deterministic Alekseev-Groebner identity.

    Args:
        mu: Drift of the unperturbed ODE
        y_drift: Drift g of the perturbed trajectory Y
        y0: Common initial value
        f: Test function
        T: Horizon
        outer_steps: Midpoint quadrature nodes in [0, T]
        inner_steps: Runge-Kutta steps per flow solve

    Returns:
        AgResult with lhs, rhs and residual
    """
    if T <= 0:
        raise DomainError(f"Horizon must be positive, got {T}")
    if outer_steps < 1 or inner_steps < 1:
        raise DomainError("Quadrature and integrator resolutions must be positive")
    y0 = np.asarray(y0, dtype=float).reshape(mu.dimension)
    lhs, y_path, per_half = _lhs(mu, y_drift, y0, f, T, outer_steps, inner_steps)

    H = T / outer_steps
    s = (np.arange(outer_steps) + 0.5) * H
    y_mid = y_path[(2 * np.arange(outer_steps) + 1) * per_half]
    flows = ode_flow(mu, s, y_mid, T, inner_steps, with_derivatives=True)
    # dY/ds is taken from the drift itself, never from the stored trajectory
    defect = mu.eval(s, y_mid) - y_drift.eval(s, y_mid)
    integrand = np.einsum('nka,nab,nb->nk', f.gradient(flows.X), flows.X1, defect)
    rhs = H * np.sum(integrand, axis=0)

    lhs_fine, _, _ = _lhs(mu, y_drift, y0, f, T, outer_steps, 2 * inner_steps)
    gap = float(np.linalg.norm(lhs_fine - lhs))
    result = AgResult(lhs, rhs, lhs - rhs, gap, outer_steps, inner_steps)
    logger.debug("AG residual outer=%d inner=%d: %s", outer_steps, inner_steps, result.residual)
    return result


@dataclass(frozen=True)
class OrderStudy:
    """Residual norms over a sequence of outer resolutions."""
    results: List[AgResult]
    ratios: List[float]

    def passes(self, min_ratio: float = DEFAULT_AG_MIN_RATIO) -> bool:
        return all(r >= min_ratio for r in self.ratios)


def residual_order_study(mu: VectorField, y_drift: VectorField, y0, f: TestFunction, T: float,
                         outer_levels: Sequence[int], inner_steps: int) -> OrderStudy:
    """Run :func:`ag_residual` for each outer level and report successive ratios
    |residual(level_i)| / |residual(level_{i+1})|."""
    results = [ag_residual(mu, y_drift, y0, f, T, n, inner_steps) for n in outer_levels]
    ratios = []
    for coarse, fine in zip(results, results[1:]):
        ratios.append(coarse.residual_norm / fine.residual_norm if fine.residual_norm > 0 else math.inf)
    return OrderStudy(results, ratios)


@dataclass(frozen=True)
class InitialTimeCheck:
    """Finite-difference versus analytic derivative of X_{s,T}^x in s."""
    finite_difference: np.ndarray
    analytic: np.ndarray
    relative_error: float


def initial_time_derivative_check(mu: VectorField, s: float, x, T: float,
                                  inner_steps: int, eps: float = 1e-4) -> InitialTimeCheck:
    """Compare d/ds X_{s,T}^x with -X1_{s,T}^x mu(s, x).

    The difference quotient is central in s with half-width ``eps``.
    """
    if not eps < s < T - eps:
        raise DomainError(f"Need eps < s < T - eps, got s={s}, eps={eps}, T={T}")
    x = np.asarray(x, dtype=float).reshape(mu.dimension)
    plus = ode_flow(mu, s + eps, x, T, inner_steps, with_derivatives=False).X
    minus = ode_flow(mu, s - eps, x, T, inner_steps, with_derivatives=False).X
    fd = (plus - minus) / (2.0 * eps)
    centre = ode_flow(mu, s, x, T, inner_steps, with_derivatives=True)
    analytic = -centre.X1 @ mu.eval(s, x)
    return InitialTimeCheck(fd, analytic, relative_error(fd, analytic))
