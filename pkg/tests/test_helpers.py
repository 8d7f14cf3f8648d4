import math

import numpy as np
import pytest

from sde_perturbation.utils.helpers import (central_difference, format_duration, format_float,
                                            loglog_fit, mean_and_se, relative_error, rms_and_se,
                                            two_sided_p_value, within_se, z_score)


def test_mean_and_se():
    est = mean_and_se(np.array([1.0, 2.0, 3.0, 4.0]))
    assert est.mean == 2.5
    assert est.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
    assert est.samples == 4
    assert math.isinf(mean_and_se(np.array([1.0])).se)


def test_rms_and_se():
    rms, se = rms_and_se(np.array([3.0, 4.0]))
    assert rms == pytest.approx(math.sqrt(12.5))
    assert se > 0
    assert rms_and_se(np.zeros(3)) == (0.0, 0.0)


def test_loglog_fit_recovers_power_law():
    n = np.array([8.0, 16.0, 32.0, 64.0])
    fit = loglog_fit(n, 3.0 * n ** -0.5)
    assert fit.slope == pytest.approx(-0.5)
    assert fit.intercept == pytest.approx(math.log2(3.0))
    with pytest.raises(ValueError):
        loglog_fit(n, np.array([1.0, 0.0, 1.0, 1.0]))


def test_central_difference():
    jac = central_difference(lambda x: np.array([x[0] ** 3, x[0] * x[1]]), np.array([2.0, 3.0]), 1e-4)
    np.testing.assert_allclose(jac, [[12.0, 0.0], [3.0, 2.0]], rtol=1e-7, atol=1e-9)


def test_relative_error_floor():
    assert relative_error(1.0 + 1e-6, 1.0) == pytest.approx(1e-6, rel=1e-6)
    assert relative_error(0.0, 0.0) == 0.0


def test_z_score_and_p_value():
    assert z_score(1.3, 1.0, 0.1) == pytest.approx(3.0)
    assert z_score(1.0, 1.0, 0.0) == 0.0
    assert math.isinf(z_score(1.1, 1.0, 0.0))
    assert two_sided_p_value(0.0) == pytest.approx(1.0)
    assert two_sided_p_value(1.959964) == pytest.approx(0.05, abs=1e-6)
    assert within_se(1.2, 1.0, 0.1, 3.0)
    assert not within_se(1.4, 1.0, 0.1, 3.0)


def test_formatting():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.0) == "2"
    assert format_duration(65) == "1 min 5.0 s"
