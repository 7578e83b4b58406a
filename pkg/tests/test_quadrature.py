import math

import numpy as np
import pytest

from jumplab.exceptions import QuadratureError
from jumplab.quadrature import gauss_legendre, radial_integral, sphere_area, sphere_rule


def test_gauss_legendre_integrates_polynomials_exactly():
    t, w = gauss_legendre(10)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    for k in range(20):
        assert np.dot(w, t**k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sphere_rule_weights_sum_to_area(d):
    dirs, w = sphere_rule(d, 32)
    assert w.sum() == pytest.approx(sphere_area(d), rel=1e-12)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_sphere_area_values():
    assert sphere_area(1) == 2.0
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def _power(p):
    return lambda rho, idx: rho**p


@pytest.mark.parametrize("p,lo,hi,exact", [
    (-1.5, 1.0, np.inf, 2.0),                # int_1^inf r^-1.5
    (0.5, 0.0, 0.25, 2 / 3 * 0.25**1.5),    # int_0^0.25 r^0.5
    (-0.5, 0.0, 1.0, 2.0),                   # integrable singularity at 0
])
def test_radial_integral_power_laws(p, lo, hi, exact):
    val, err = radial_integral(_power(p), np.array([lo]), np.array([hi]))
    assert val[0] == pytest.approx(exact, rel=1e-11)
    assert err[0] <= 1e-9 * exact


def test_radial_integral_nonintegrable_tail_reports_partial_value():
    with pytest.raises(QuadratureError) as info:
        radial_integral(_power(-0.5), np.array([1.0]), np.array([np.inf]))
    assert info.value.partial_value is not None
