import math

import numpy as np
import pytest

from sde_perturbation.core.brownian import sample_brownian, sample_brownian_batch, stack_increments
from sde_perturbation.core.exceptions import DivergedSampleError, DomainError
from sde_perturbation.core.fields import (ConstantDiffusion, DiagonalLinearDiffusion, LinearDrift, VectorField,
                                          ScalarPolynomialDrift, ZeroDrift)
from sde_perturbation.core.flows import (flow_solve, flow_solve_batch, ode_flow, reference_solution,
                                         tamed_euler, tamed_euler_batch)
from sde_perturbation.core.grid import make_grid


@pytest.fixture
def vdp_path():
    return sample_brownian(99, 0, make_grid(1.0, 256), 1)


def _fd_columns(fn, x, step=1e-5):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * step))
    return np.stack(cols, axis=-1)


def test_first_variation_matches_same_path_differences(vdp_field, vdp_params, vdp_path):
    sigma = vdp_params.diffusion()
    x = np.array([0.5, -0.3])
    result = flow_solve(vdp_field, sigma, 0, x, vdp_path)
    fd = _fd_columns(lambda y: flow_solve(vdp_field, sigma, 0, y, vdp_path, with_derivatives=False).X, x)
    np.testing.assert_allclose(result.X1, fd, rtol=1e-5, atol=1e-8)


def test_second_variation_matches_same_path_differences(vdp_field, vdp_params, vdp_path):
    sigma = vdp_params.diffusion()
    x = np.array([0.5, -0.3])
    result = flow_solve(vdp_field, sigma, 40, x, vdp_path)
    fd = _fd_columns(lambda y: flow_solve(vdp_field, sigma, 40, y, vdp_path).X1, x)
    np.testing.assert_allclose(result.X2, fd, rtol=1e-4, atol=1e-7)


def test_linear_drift_derivatives():
    grid = make_grid(1.0, 32)
    path = sample_brownian(1, 0, grid, 1)
    result = flow_solve(LinearDrift([[-1.0]]), ConstantDiffusion([[0.5]]), 8, [2.0], path)
    assert result.X1[0, 0] == pytest.approx((1.0 - grid.h) ** 24, rel=1e-12)
    assert not np.any(result.X2)
    assert result.start_time == 0.25 and result.end_time == 1.0


def test_flow_composes_over_intermediate_node(vdp_field, vdp_params, vdp_path):
    sigma = vdp_params.diffusion()
    x = np.array([1.0, 0.2])
    whole = flow_solve(vdp_field, sigma, 0, x, vdp_path)
    first = flow_solve(vdp_field, sigma, 0, x, vdp_path, t_index=100)
    second = flow_solve(vdp_field, sigma, 100, first.X, vdp_path)
    np.testing.assert_allclose(second.X, whole.X, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(second.X1 @ first.X1, whole.X1, rtol=1e-10, atol=1e-12)


def test_batch_start_nodes_match_single_solves(vdp_field, vdp_params, vdp_path):
    sigma = vdp_params.diffusion()
    starts = np.array([0, 10, 40, 256])
    xs = np.array([[0.0, 0.0], [0.5, -0.3], [1.0, 1.0], [2.0, 0.0]])
    batch = flow_solve_batch(vdp_field, sigma, starts, xs, vdp_path.increments[:, np.newaxis, :],
                             vdp_path.grid)
    assert not np.any(batch.diverged)
    for i, s in enumerate(starts):
        single = flow_solve(vdp_field, sigma, int(s), xs[i], vdp_path)
        np.testing.assert_allclose(batch.X[i], single.X, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(batch.X1[i], single.X1, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(batch.X[3], xs[3])


def test_derivatives_need_additive_noise(unit_grid):
    path = sample_brownian(1, 0, unit_grid, 1)
    with pytest.raises(DomainError):
        flow_solve(LinearDrift([[1.0]]), DiagonalLinearDiffusion(0.5), 0, [1.0], path)
    result = flow_solve(LinearDrift([[1.0]]), DiagonalLinearDiffusion(0.5), 0, [1.0], path,
                        with_derivatives=False)
    assert result.X1 is None and np.all(np.isfinite(result.X))


def test_divergence_is_reported():
    grid = make_grid(2.0, 8)
    path = sample_brownian(1, 0, grid, 1)
    cubic = ScalarPolynomialDrift([0.0, 0.0, 0.0, -1.0])
    sigma = ConstantDiffusion([[1.0]])
    with pytest.raises(DivergedSampleError) as info:
        flow_solve(cubic, sigma, 0, [10.0], path, with_derivatives=False)
    assert info.value.sample_index == 0
    batch = flow_solve_batch(cubic, sigma, 0, np.array([[10.0], [0.0]]),
                             path.increments[:, np.newaxis, :], grid, with_derivatives=False)
    assert batch.diverged_at[0] >= 0
    assert batch.diverged_at[1] == -1


def test_taming_indicator(vdp_field, vdp_params):
    grid = make_grid(1.0, 8)
    path = sample_brownian(3, 0, make_grid(1.0, 64), 1)
    traj = tamed_euler(vdp_field, vdp_params.beta_column, (2.0, 2.0), grid, path)
    threshold = grid.steps_N / grid.horizon_T
    assert np.all(traj.drift_norm_sq[traj.drift_applied] < threshold)
    assert np.all(traj.drift_norm_sq[~traj.drift_applied] >= threshold)
    assert traj.tamed_steps >= 1
    plain = tamed_euler(vdp_field, vdp_params.beta_column, (2.0, 2.0), grid, path, tamed=False)
    assert plain.tamed_steps == 0


def test_zero_drift_scheme_is_scaled_brownian_motion(unit_grid):
    path = sample_brownian(5, 2, unit_grid, 1)
    beta = np.array([[0.0], [2.0]])
    traj = tamed_euler(ZeroDrift(2), beta, (1.0, -1.0), make_grid(1.0, 16), path)
    np.testing.assert_allclose(traj.terminal, [1.0, -1.0 + 2.0 * path.terminal[0]], rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(traj.interpolate(8), traj.states[2])
    np.testing.assert_allclose(traj.interpolate(10), [1.0, -1.0 + 2.0 * path.value(10)[0]],
                               rtol=1e-12, atol=1e-12)


def test_batch_scheme_matches_single_runs(vdp_field, vdp_params):
    fine = make_grid(1.0, 128)
    coarse = make_grid(1.0, 16)
    paths = sample_brownian_batch(8, range(5), fine, 1)
    batch = tamed_euler_batch(vdp_field, vdp_params.beta_column, vdp_params.xi, coarse,
                              stack_increments(paths), record=True)
    assert batch.states.shape == (17, 5, 2)
    for b, path in enumerate(paths):
        traj = tamed_euler(vdp_field, vdp_params.beta_column, vdp_params.xi, coarse, path)
        np.testing.assert_allclose(batch.terminal[b], traj.terminal, rtol=1e-14, atol=1e-15)
        assert batch.tamed_steps[b] == traj.tamed_steps
    assert np.all(batch.diverged_at == -1)
    with pytest.raises(DomainError):
        tamed_euler_batch(vdp_field, vdp_params.beta_column, vdp_params.xi, make_grid(1.0, 48),
                          stack_increments(paths))


def test_reference_solution_needs_additive_noise(unit_grid):
    path = sample_brownian(1, 0, unit_grid, 1)
    with pytest.raises(DomainError):
        reference_solution(LinearDrift([[1.0]]), DiagonalLinearDiffusion(1.0), [1.0], path)
    ref = reference_solution(ZeroDrift(1), ConstantDiffusion([[1.0]]), [0.5], path)
    assert ref[0] == pytest.approx(0.5 + path.terminal[0])


def test_ode_flow_linear_growth():
    flow = ode_flow(LinearDrift([[1.0]]), np.array([0.0, 0.5]), np.array([[1.0], [2.0]]), 1.0, 256)
    np.testing.assert_allclose(flow.X[:, 0], [math.e, 2.0 * math.exp(0.5)], rtol=1e-10)
    np.testing.assert_allclose(flow.X1[:, 0, 0], [math.e, math.exp(0.5)], rtol=1e-10)
    assert not np.any(flow.X2)


def test_ode_flow_batch_matches_single_starts(vdp_field):
    s = np.array([0.0, 0.3, 0.9])
    x = np.array([[0.5, 0.5], [1.0, -1.0], [0.0, 2.0]])
    batch = ode_flow(vdp_field, s, x, 1.0, 200)
    for i in range(3):
        single = ode_flow(vdp_field, s[i], x[i], 1.0, 200)
        np.testing.assert_allclose(batch.X[i], single.X, rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(batch.X2[i], single.X2, rtol=1e-12, atol=1e-13)
    with pytest.raises(DomainError):
        ode_flow(vdp_field, 1.5, x[0], 1.0, 10)


class _InfiniteCurvature(VectorField):
    """Zero drift whose hessian is infinite: only X2 can blow up."""

    def eval(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (1,))

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1, 1), np.inf)


def test_second_variation_divergence_is_reported(unit_grid):
    path = sample_brownian(4, 2, unit_grid, 1)
    sigma = ConstantDiffusion([[1.0]])
    batch = flow_solve_batch(_InfiniteCurvature(), sigma, 0, np.array([[0.5]]),
                             path.increments[:, np.newaxis, :], unit_grid)
    assert batch.diverged_at[0] == 0
    assert np.all(np.isfinite(batch.X)) and np.all(np.isfinite(batch.X1))
    with pytest.raises(DivergedSampleError) as info:
        flow_solve(_InfiniteCurvature(), sigma, 0, [0.5], path)
    assert info.value.step == 0


def test_ode_flow_reports_the_diverging_step():
    # x' = x^3 from x = 2 explodes at t = 1/8
    with pytest.raises(DivergedSampleError) as info:
        ode_flow(ScalarPolynomialDrift([0.0, 0.0, 0.0, 1.0]), 0.0, np.array([2.0]), 1.0, 16,
                 with_derivatives=False)
    assert 1 <= info.value.step < 15


def test_ode_flow_is_fourth_order_on_the_oscillator(vdp_field):
    x0 = np.array([1.0, 1.0])
    exact = ode_flow(vdp_field, 0.0, x0, 1.0, 2048, with_derivatives=False).X
    errors = [np.linalg.norm(ode_flow(vdp_field, 0.0, x0, 1.0, n, with_derivatives=False).X - exact)
              for n in (32, 64)]
    assert errors[1] > 0
    assert 13.0 <= errors[0] / errors[1] <= 19.0


def test_reference_solution_tracks_ornstein_uhlenbeck():
    grid = make_grid(1.0, 4096)
    theta, sig, x0 = 1.0, 0.7, 1.0
    # exp(-theta (T - t_k)) weights give the exact solution's stochastic convolution on this path
    weights = np.exp(-theta * (grid.horizon_T - grid.nodes()[:-1]))
    drift = LinearDrift([[-theta]])
    sigma = ConstantDiffusion([[sig]])
    for index in range(20):
        path = sample_brownian(41, index, grid, 1)
        exact = math.exp(-theta * grid.horizon_T) * x0 + sig * np.dot(weights, path.increments[:, 0])
        assert reference_solution(drift, sigma, [x0], path)[0] == pytest.approx(exact, abs=2e-3)
