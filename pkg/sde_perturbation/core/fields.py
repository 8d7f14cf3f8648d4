"""Drift, diffusion and test-function types with analytic derivatives.

All evaluators broadcast over leading axes: a state array of shape (..., d)
gives drift values (..., d), jacobians (..., d, d) and hessians
(..., d, d, d), where ``hessian[..., i, j, k]`` is the second partial
derivative of component i in directions j and k.
"""

from abc import ABC, abstractmethod
from typing import Iterable, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .exceptions import DomainError
from ..utils.helpers import central_difference, relative_error


class VectorField(ABC):
    """Drift coefficient mu: [0, T] x R^d -> R^d with first and second derivatives.

    Attributes:
        dimension: State dimension d
        growth_exponent: Polynomial growth exponent p of |mu|
    """

    dimension: int = 1
    growth_exponent: float = 1.0

    @abstractmethod
    def eval(self, t: float, x: np.ndarray) -> np.ndarray:
        """mu(t, x)."""

    @abstractmethod
    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        """mu'(t, x) as (..., d, d)."""

    @abstractmethod
    def hessian(self, t: float, x: np.ndarray) -> np.ndarray:
        """mu''(t, x) as (..., d, d, d)."""


class DiffusionField(ABC):
    """Diffusion coefficient sigma: [0, T] x R^d -> R^{d x m}."""

    dimension: int = 1
    noise_dimension: int = 1
    is_additive: bool = False

    @abstractmethod
    def eval(self, t: float, x: np.ndarray) -> np.ndarray:
        """sigma(t, x) as (..., d, m)."""


class TestFunction(ABC):
    """C^2 map f: R^d -> R^k with growth constants (c, q).

    The growth constants promise, for every x,
    |f(x)| / (1 + |x|) <= c (1 + |x|^q), |f'(x)| <= c (1 + |x|^q) and
    |f''(x)| <= c (1 + |x|^q), all norms Frobenius.
    """

    __test__ = False  # not a pytest class

    input_dim: int = 1
    output_dim: int = 1
    growth_c: float = 1.0
    growth_q: float = 0.0

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        """f(x) as (..., k)."""

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """f'(x) as (..., k, d)."""

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """f''(x) as (..., k, d, d)."""


class LinearDrift(VectorField):
    """mu(t, x) = A x + b."""

    growth_exponent = 1.0

    def __init__(self, matrix, offset=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise DomainError(f"Drift matrix must be square, got shape {self.matrix.shape}")
        self.dimension = self.matrix.shape[0]
        self.offset = (np.zeros(self.dimension) if offset is None
                       else np.asarray(offset, dtype=float).reshape(self.dimension))

    def eval(self, t, x):
        return np.einsum('ij,...j->...i', self.matrix, x) + self.offset

    def jacobian(self, t, x):
        x = np.asarray(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def hessian(self, t, x):
        x = np.asarray(x)
        d = self.dimension
        return np.zeros(x.shape[:-1] + (d, d, d))


class ZeroDrift(LinearDrift):
    """mu = 0."""

    def __init__(self, dimension: int = 1):
        super().__init__(np.zeros((dimension, dimension)))
        self.growth_exponent = 0.0


class ScalarPolynomialDrift(VectorField):
    """Scalar drift mu(t, x) = c_0 + c_1 x + ... + c_n x^n (d = 1).

    Args:
        coefficients: c_0, ..., c_n in increasing degree
    """

    dimension = 1

    def __init__(self, coefficients: Iterable[float]):
        self.poly = Polynomial(np.asarray(list(coefficients), dtype=float))
        self.dpoly = self.poly.deriv(1)
        self.ddpoly = self.poly.deriv(2)
        self.growth_exponent = float(max(self.poly.degree(), 0))

    def eval(self, t, x):
        return self.poly(np.asarray(x, dtype=float))

    def jacobian(self, t, x):
        return self.dpoly(np.asarray(x, dtype=float))[..., np.newaxis]

    def hessian(self, t, x):
        return self.ddpoly(np.asarray(x, dtype=float))[..., np.newaxis, np.newaxis]

    def __repr__(self) -> str:
        return f"ScalarPolynomialDrift({list(self.poly.coef)})"


class ConstantDiffusion(DiffusionField):
    """Additive noise sigma(t, x) = S for a fixed d x m matrix S."""

    is_additive = True

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dimension, self.noise_dimension = self.matrix.shape

    def eval(self, t, x):
        x = np.asarray(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape)


class DiagonalLinearDiffusion(DiffusionField):
    """Multiplicative noise sigma(t, x) = scale * diag(x) (d = m)."""

    is_additive = False

    def __init__(self, scale: float, dimension: int = 1):
        self.scale = float(scale)
        self.dimension = self.noise_dimension = int(dimension)

    def eval(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.scale * x[..., :, np.newaxis] * np.eye(self.dimension)


class IdentityFunction(TestFunction):
    """f(x) = x."""

    growth_q = 0.0

    def __init__(self, dimension: int = 1):
        self.input_dim = self.output_dim = int(dimension)
        self.growth_c = max(1.0, float(np.sqrt(self.input_dim)))

    def value(self, x):
        return np.array(x, dtype=float)

    def gradient(self, x):
        x = np.asarray(x)
        d = self.input_dim
        return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()

    def hessian(self, x):
        x = np.asarray(x)
        d = self.input_dim
        return np.zeros(x.shape[:-1] + (d, d, d))


class SquaredNormFunction(TestFunction):
    """f(x) = |x|^2 (k = 1); for d = 1 this is x^2."""

    output_dim = 1
    growth_q = 1.0

    def __init__(self, dimension: int = 1):
        self.input_dim = int(dimension)
        self.growth_c = 2.0 * np.sqrt(self.input_dim)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1, keepdims=True)

    def gradient(self, x):
        return 2.0 * np.asarray(x, dtype=float)[..., np.newaxis, :]

    def hessian(self, x):
        x = np.asarray(x)
        d = self.input_dim
        return np.broadcast_to(2.0 * np.eye(d), x.shape[:-1] + (1, d, d)).copy()


class SquareSineFunction(TestFunction):
    """f(x) = (x^2, sin x) for scalar x."""

    input_dim = 1
    output_dim = 2
    growth_c = 2.0
    growth_q = 1.0

    def value(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.stack([x * x, np.sin(x)], axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.stack([2.0 * x, np.cos(x)], axis=-1)[..., np.newaxis]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.stack([np.full_like(x, 2.0), -np.sin(x)], axis=-1)[..., np.newaxis, np.newaxis]


TEST_FUNCTIONS = {
    'identity': IdentityFunction,
    'square': SquaredNormFunction,
    'square_sine': SquareSineFunction,
}


def make_test_function(name: str, dimension: int = 1) -> TestFunction:
    """Build a test function by its configuration name."""
    if name not in TEST_FUNCTIONS:
        raise DomainError(f"Unknown test function '{name}'; choose from {sorted(TEST_FUNCTIONS)}")
    cls = TEST_FUNCTIONS[name]
    if cls is SquareSineFunction:
        if dimension != 1:
            raise DomainError("square_sine is defined for scalar states only")
        return cls()
    return cls(dimension)


def check_field_derivatives(field: VectorField, points: np.ndarray, t: float = 0.0,
                            step: float = 1e-5) -> Tuple[float, float]:
    """Worst relative errors of the analytic jacobian and hessian against
    central finite differences over the sample points.

    Returns:
        (jacobian_error, hessian_error)
    """
    jac_err = hess_err = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        fd_jac = central_difference(lambda y: field.eval(t, y), x, step)
        jac_err = max(jac_err, relative_error(field.jacobian(t, x), fd_jac))
        fd_hess = central_difference(lambda y: field.jacobian(t, y), x, step)
        hess_err = max(hess_err, relative_error(field.hessian(t, x), fd_hess))
    return jac_err, hess_err


def check_test_function_derivatives(f: TestFunction, points: np.ndarray,
                                    step: float = 1e-5) -> Tuple[float, float]:
    """Same as :func:`check_field_derivatives` for a test function."""
    grad_err = hess_err = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        grad_err = max(grad_err, relative_error(f.gradient(x), central_difference(f.value, x, step)))
        hess_err = max(hess_err, relative_error(f.hessian(x), central_difference(f.gradient, x, step)))
    return grad_err, hess_err


def check_growth(f: TestFunction, points: np.ndarray) -> bool:
    """True when the growth bounds of ``f`` hold at every sample point."""
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        r = float(np.linalg.norm(x))
        bound = f.growth_c * (1.0 + r ** f.growth_q)
        if np.linalg.norm(f.value(x)) / (1.0 + r) > bound:
            return False
        if np.linalg.norm(f.gradient(x)) > bound or np.linalg.norm(f.hessian(x)) > bound:
            return False
    return True


def is_additive_constant(sigma: DiffusionField, points: np.ndarray, t: float = 0.0) -> bool:
    """Check the additive flag of ``sigma`` against its values at sample points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    first = sigma.eval(t, points[0])
    return all(np.array_equal(sigma.eval(t, x), first) for x in points[1:])

