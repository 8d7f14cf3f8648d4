import numpy as np
import pytest

from sde_perturbation.core.exceptions import DomainError
from sde_perturbation.core.fields import (ConstantDiffusion, DiagonalLinearDiffusion, IdentityFunction,
                                          LinearDrift, ScalarPolynomialDrift, SquaredNormFunction,
                                          SquareSineFunction, ZeroDrift, check_field_derivatives,
                                          check_growth, check_test_function_derivatives,
                                          is_additive_constant, make_test_function)
from sde_perturbation.core.vdp import VanDerPolDrift, VdpParams


def test_vdp_derivatives_match_finite_differences(vdp_field, sample_points):
    jac_err, hess_err = check_field_derivatives(vdp_field, sample_points)
    assert jac_err < 1e-6
    assert hess_err < 1e-6


def test_vdp_jacobian_closed_form():
    field = VanDerPolDrift(VdpParams(alpha=1.0, gamma=2.0, delta=3.0))
    np.testing.assert_allclose(field.jacobian(0.0, np.array([2.0, 1.0])), [[0.0, 1.0], [-7.0, -2.0]])
    H = field.hessian(0.0, np.array([[2.0, 1.0], [0.5, -1.0]]))
    assert H.shape == (2, 2, 2, 2)
    np.testing.assert_array_equal(H, np.swapaxes(H, -1, -2))


def test_polynomial_drift():
    cubic = ScalarPolynomialDrift([0.0, 0.0, 0.0, -1.0])
    x = np.array([2.0])
    assert cubic.eval(0.0, x)[0] == -8.0
    assert cubic.jacobian(0.0, x)[0, 0] == -12.0
    assert cubic.hessian(0.0, x)[0, 0, 0] == -12.0
    assert cubic.growth_exponent == 3.0
    jac_err, hess_err = check_field_derivatives(cubic, np.array([[-1.5], [0.0], [0.7]]))
    assert jac_err < 1e-6 and hess_err < 1e-6


def test_linear_drift():
    drift = LinearDrift([[1.0, 2.0], [0.0, -1.0]], offset=[1.0, 0.0])
    np.testing.assert_allclose(drift.eval(0.0, np.array([1.0, 1.0])), [4.0, -1.0])
    assert not np.any(drift.hessian(0.0, np.ones((3, 2))))
    assert not np.any(ZeroDrift(2).eval(0.0, np.ones(2)))
    with pytest.raises(DomainError):
        LinearDrift([[1.0, 2.0]])


@pytest.mark.parametrize("f, points", [
    (IdentityFunction(2), np.array([[0.3, -1.0], [2.0, 0.5]])),
    (SquaredNormFunction(3), np.array([[0.3, -1.0, 2.0], [0.0, 0.0, 0.0]])),
    (SquareSineFunction(), np.array([[-2.0], [0.0], [1.3]])),
])
def test_test_function_derivatives(f, points):
    grad_err, hess_err = check_test_function_derivatives(f, points)
    assert grad_err < 1e-6
    assert hess_err < 1e-6
    assert check_growth(f, points)


def test_test_function_shapes():
    x = np.ones((4, 3))
    f = SquaredNormFunction(3)
    assert f.value(x).shape == (4, 1)
    assert f.gradient(x).shape == (4, 1, 3)
    assert f.hessian(x).shape == (4, 1, 3, 3)
    g = SquareSineFunction()
    assert g.value(np.ones((5, 1))).shape == (5, 2)
    assert g.hessian(np.ones((5, 1))).shape == (5, 2, 1, 1)


def test_make_test_function():
    assert isinstance(make_test_function("square", 2), SquaredNormFunction)
    assert make_test_function("identity", 3).output_dim == 3
    with pytest.raises(DomainError):
        make_test_function("square_sine", 2)
    with pytest.raises(DomainError):
        make_test_function("cube")


def test_additive_flag(sample_points):
    additive = ConstantDiffusion([[0.0], [1.0]])
    assert additive.is_additive
    assert is_additive_constant(additive, sample_points)
    assert additive.eval(0.0, np.zeros((3, 2))).shape == (3, 2, 1)
    multiplicative = DiagonalLinearDiffusion(0.5, 2)
    assert not multiplicative.is_additive
    assert not is_additive_constant(multiplicative, sample_points)
