"""Shared fixtures for the SDE Perturbation Lab tests."""

import textwrap

import numpy as np
import pytest

from sde_perturbation.core.grid import make_grid
from sde_perturbation.core.vdp import VanDerPolDrift, VdpParams


@pytest.fixture
def vdp_params():
    """Reference oscillator: alpha = beta = gamma = delta = 1, xi = 0, T = 1."""
    return VdpParams(1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def vdp_field(vdp_params):
    return VanDerPolDrift(vdp_params)


@pytest.fixture
def unit_grid():
    return make_grid(1.0, 64)


@pytest.fixture
def sample_points():
    """A handful of planar points, origin included."""
    rng = np.random.default_rng(7)
    return np.vstack([np.zeros(2), rng.uniform(-2.0, 2.0, size=(5, 2))])


@pytest.fixture
def write_config(tmp_path):
    """Write an INI document to the temporary directory and return its path."""

    def _write(text: str, name: str = "run.ini") -> str:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return str(path)

    return _write
