import numpy as np
import pytest

from sde_perturbation.core.brownian import (RandomStream, coarsen, coarsen_increments, sample_brownian,
                                            sample_brownian_batch, stack_increments, tag_digest)
from sde_perturbation.core.exceptions import DomainError
from sde_perturbation.core.grid import make_grid


def test_same_seed_same_path(unit_grid):
    a = sample_brownian(11, 3, unit_grid, 2)
    b = sample_brownian(11, 3, unit_grid, 2)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(a.values, b.values)


def test_streams_are_separated(unit_grid):
    base = sample_brownian(11, 3, unit_grid, 1)
    assert not np.array_equal(base.increments, sample_brownian(11, 4, unit_grid, 1).increments)
    assert not np.array_equal(base.increments, sample_brownian(12, 3, unit_grid, 1).increments)
    assert not np.array_equal(base.increments, sample_brownian(11, 3, unit_grid, 1, tag="other").increments)


def test_batch_order_does_not_matter(unit_grid):
    paths = sample_brownian_batch(5, [9, 2, 7], unit_grid, 1)
    assert np.array_equal(paths[1].increments, sample_brownian(5, 2, unit_grid, 1).increments)
    assert np.array_equal(paths[0].increments, sample_brownian(5, 9, unit_grid, 1).increments)


def test_tag_digest_is_stable():
    assert tag_digest("vdp-rate") == tag_digest("vdp-rate")
    assert tag_digest("vdp-rate") != tag_digest("iag-weak")
    assert 0 <= tag_digest("vdp-rate") < 2 ** 64


@pytest.mark.parametrize("seed, index", [(-1, 0), (2 ** 64, 0), (0, -1)])
def test_invalid_stream(seed, index):
    with pytest.raises(DomainError):
        RandomStream(seed, "x", index)


def test_path_values_and_read_only(unit_grid):
    path = sample_brownian(1, 0, unit_grid, 2)
    assert path.increments.shape == (64, 2)
    assert np.all(path.values[0] == 0.0)
    np.testing.assert_allclose(path.values[-1], path.increments.sum(axis=0), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(path.increment_between(8, 24), path.values[24] - path.values[8],
                               rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        path.increments[0, 0] = 1.0


def test_coarsen_block_sums(unit_grid):
    path = sample_brownian(2, 1, unit_grid, 1)
    coarse = coarsen(path, 4)
    assert coarse.grid.steps_N == 16
    expected = np.array([path.increments[4 * j] + path.increments[4 * j + 1]
                         + path.increments[4 * j + 2] + path.increments[4 * j + 3]
                         for j in range(16)])
    assert np.array_equal(coarse.increments, expected)


def test_coarsening_keeps_terminal_value(unit_grid):
    path = sample_brownian(2, 1, unit_grid, 3)
    for factor in (1, 2, 8, 64):
        assert np.array_equal(coarsen(path, factor).terminal, path.terminal)
    assert coarsen(path, 1) is path


def test_coarsen_rejects_non_divisor(unit_grid):
    path = sample_brownian(2, 1, unit_grid, 1)
    with pytest.raises(DomainError):
        coarsen(path, 3)
    with pytest.raises(DomainError):
        coarsen(path, 0)


def test_stacked_coarsening_matches_per_path(unit_grid):
    paths = sample_brownian_batch(3, range(4), unit_grid, 2)
    stacked = coarsen_increments(stack_increments(paths), 8)
    assert stacked.shape == (8, 4, 2)
    for b, path in enumerate(paths):
        assert np.array_equal(stacked[:, b, :], coarsen(path, 8).increments)


def test_increment_distribution():
    grid = make_grid(2.0, 64)
    incs = stack_increments(sample_brownian_batch(17, range(2000), grid, 1))
    assert abs(incs.mean()) < 4 * np.sqrt(grid.h / incs.size)
    assert incs.var() == pytest.approx(grid.h, rel=0.05)


@pytest.fixture(scope="module")
def eighth_grid_values():
    grid = make_grid(1.0, 8)
    paths = sample_brownian_batch(23, range(4000), grid, 1)
    return grid, np.stack([p.values[:, 0] for p in paths])


def test_terminal_mean_is_zero(eighth_grid_values):
    _, values = eighth_grid_values
    terminal = values[:, -1]
    assert abs(terminal.mean()) <= 3.0 * terminal.std(ddof=1) / np.sqrt(terminal.size)


def test_increment_variance_is_step(eighth_grid_values):
    grid, values = eighth_grid_values
    squares = np.diff(values, axis=1).ravel() ** 2
    se = squares.std(ddof=1) / np.sqrt(squares.size)
    assert abs(squares.mean() - grid.h) <= 3.0 * se


@pytest.mark.parametrize("i, j", [(2, 6), (4, 4), (7, 1)])
def test_covariance_is_min_of_times(eighth_grid_values, i, j):
    grid, values = eighth_grid_values
    products = values[:, i] * values[:, j]
    se = products.std(ddof=1) / np.sqrt(products.size)
    assert abs(products.mean() - min(grid.node(i), grid.node(j))) <= 3.0 * se


@pytest.mark.parametrize("other", [dict(tag="iag-weak"), dict(shift=1), dict(seed=24)])
def test_distinct_streams_are_uncorrelated(eighth_grid_values, other):
    grid, values = eighth_grid_values
    count = values.shape[0]
    shift = other.get("shift", 0)
    paths = sample_brownian_batch(other.get("seed", 23), range(shift, shift + count), grid, 1,
                                  tag=other.get("tag", "brownian"))
    terminal = np.array([p.terminal[0] for p in paths])
    corr = np.corrcoef(values[:, -1], terminal)[0, 1]
    assert abs(corr) <= 4.0 / np.sqrt(count)
