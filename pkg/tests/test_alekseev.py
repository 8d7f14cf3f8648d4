import math

import numpy as np
import pytest

from sde_perturbation.core.alekseev import (ag_residual, initial_time_derivative_check,
                                            residual_order_study, rk4_trajectory)
from sde_perturbation.core.exceptions import DomainError
from sde_perturbation.core.fields import (IdentityFunction, LinearDrift, ScalarPolynomialDrift,
                                          SquaredNormFunction, SquareSineFunction, ZeroDrift)

CUBIC = ScalarPolynomialDrift([0.0, 0.0, 0.0, -1.0])
SHIFTED_CUBIC = ScalarPolynomialDrift([0.1, 0.0, 0.0, -1.0])


def test_linear_growth_against_constant_path():
    result = ag_residual(LinearDrift([[1.0]]), ZeroDrift(1), [1.0], IdentityFunction(1), 1.0, 1024, 1024)
    assert result.lhs[0] == pytest.approx(math.e - 1.0, rel=1e-10)
    assert result.rhs[0] == pytest.approx(math.e - 1.0, abs=1e-6)
    assert result.residual_norm <= 1e-6
    assert result.lhs_halving_gap <= 1e-10


@pytest.mark.slow
def test_linear_growth_full_resolution():
    result = ag_residual(LinearDrift([[1.0]]), ZeroDrift(1), [1.0], IdentityFunction(1), 1.0, 4096, 4096)
    assert abs(result.residual[0]) <= 1e-8


def test_unperturbed_trajectory_has_zero_residual():
    result = ag_residual(CUBIC, CUBIC, [1.0], SquaredNormFunction(1), 1.0, 16, 256)
    assert not np.any(result.rhs)
    assert result.residual_norm <= 1e-8


def test_cubic_drift_with_constant_perturbation():
    result = ag_residual(CUBIC, SHIFTED_CUBIC, [1.0], SquaredNormFunction(1), 1.0, 256, 1024)
    assert abs(result.lhs[0]) > 1e-3
    assert result.residual_norm <= 1e-5
    assert result.lhs_halving_gap <= 1e-8


def test_vector_valued_test_function():
    result = ag_residual(CUBIC, SHIFTED_CUBIC, [1.0], SquareSineFunction(), 1.0, 256, 1024)
    assert result.lhs.shape == (2,)
    assert result.residual_norm <= 1e-5


def test_residual_shrinks_with_outer_resolution():
    study = residual_order_study(CUBIC, SHIFTED_CUBIC, [1.0], SquaredNormFunction(1), 1.0,
                                 [8, 16, 32], 1024)
    assert len(study.ratios) == 2
    assert study.passes()


def test_initial_time_derivative(vdp_field):
    check = initial_time_derivative_check(vdp_field, 0.5, [0.5, -0.3], 1.0, 512)
    assert check.relative_error <= 1e-3
    with pytest.raises(DomainError):
        initial_time_derivative_check(vdp_field, 0.0, [0.5, -0.3], 1.0, 512)


def test_rk4_trajectory_exponential():
    path = rk4_trajectory(LinearDrift([[-1.0]]), np.array([1.0]), 2.0, 200)
    assert path.shape == (201, 1)
    assert path[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-9)


@pytest.mark.parametrize("T, outer, inner", [(0.0, 4, 4), (1.0, 0, 4), (1.0, 4, 0)])
def test_invalid_resolution(T, outer, inner):
    with pytest.raises(DomainError):
        ag_residual(CUBIC, SHIFTED_CUBIC, [1.0], IdentityFunction(1), T, outer, inner)
