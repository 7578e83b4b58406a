import numpy as np
import pytest

from jumplab import (
    L_lower_bound, OrderField, StableKernel, VariableOrderKernel, compute_L, compute_L1,
    compute_L2, doubling_exponent, order_comparability, tail_mass,
)


@pytest.mark.parametrize("s,expected", [(0.25, 8.0), (1.0, 4.0)])
def test_L1_stable(stable, s, expected):
    v = compute_L1(stable, 0.0, s)
    assert v.value == pytest.approx(expected, rel=1e-10)
    assert v.value == tail_mass(stable, 0.0, s)


def test_L1_truncated_is_zero(stable):
    assert compute_L1(stable.truncated(1.0), 0.0, 2.0).value == 0.0


@pytest.mark.parametrize("s,expected", [(0.25, 2 * 0.25**1.5 / 1.5), (1.0, 4.0 / 3.0)])
def test_L2_stable(stable, s, expected):
    assert compute_L2(stable, 0.3, s).value == pytest.approx(expected, rel=1e-10)


def test_L2_decreases_to_zero_on_dyadic_scales():
    k = VariableOrderKernel(OrderField.sinusoidal(0.5, 0.2, 1.0))
    vals = [compute_L2(k, 0.1, 2.0**-j).value for j in range(12)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3 * vals[0]


def test_L_sum_of_terms(stable):
    L = compute_L(stable, 0.0, 0.25, 0.5)
    assert L.details["L1_term"] == pytest.approx(8.0, rel=1e-10)
    assert L.details["L2_term"] == pytest.approx((4 / 3) ** 3 * 2, rel=1e-10)
    assert L.value == pytest.approx(12.740740740740741, rel=1e-10)


def test_L_lower_bound(stable):
    bound = L_lower_bound(1.0, 0.5, 0.25, 1)
    assert bound == pytest.approx(2 * (1 - 2**-0.5) * 2 * 0.25**-0.5, rel=1e-15)
    assert bound == pytest.approx(2.3431457505076194)
    assert compute_L(stable, 0.0, 0.25, 0.5).value >= bound


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.5])
def test_L_scaling_stable(alpha):
    k = StableKernel(alpha)
    a = compute_L(k, 0.0, 0.1, alpha).value
    b = compute_L(k, 0.0, 0.2, alpha).value
    assert a / b == pytest.approx(2.0**alpha, rel=1e-9)


def test_constant_order_comparability_is_flat():
    k = VariableOrderKernel(OrderField.constant(0.5), far_order=0.5)
    rep = order_comparability(k, 0.0, 2.0 ** -np.arange(1, 9))
    assert rep.ratio <= 1 + 1e-6


def test_variable_order_comparability_bounded():
    k = VariableOrderKernel(OrderField.sinusoidal(0.5, 0.2, 1.0))
    rep = order_comparability(k, 0.0, 2.0 ** -np.arange(1, 9))
    assert rep.order_at_center == pytest.approx(0.5)
    assert 1.0 <= rep.ratio <= 10.0
    assert rep.envelope_ratio <= 1.0


def test_doubling_exponent_stable():
    sigma, const = doubling_exponent(StableKernel(0.8), 0.0, 0.05)
    assert sigma == pytest.approx(0.8, rel=1e-8)
    assert const == pytest.approx(1.0, rel=1e-8)
