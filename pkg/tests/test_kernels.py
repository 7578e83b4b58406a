import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumplab import (
    KernelBounds, ModulatedKernel, OrderField, OscillatoryModulation, SamplingPlan,
    StableKernel, TabulatedKernel, VariableOrderKernel, eval_kernel, tail_mass, verify_bounds,
)
from jumplab.exceptions import ConfigurationError, DomainError

STABLE_BOUNDS = KernelBounds(kappa1=1, kappa2=1, beta1=0.5, beta2=0.5, kappa3=4, kappa4=1,
                             alpha=0.5)


def test_eval_kernel_power_law(stable):
    assert eval_kernel(stable, 0.0, 0.5) == pytest.approx(0.5**-1.5, rel=1e-15)
    assert eval_kernel(stable, 0.0, 0.5) == pytest.approx(2.8284271247461903)


@pytest.mark.parametrize("x,y", [(0.0, 0.0), (np.nan, 1.0), (0.0, np.inf)])
def test_eval_kernel_domain_errors(stable, x, y):
    with pytest.raises(DomainError):
        eval_kernel(stable, x, y)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_eval_kernel_symmetric(x, y):
    if x == y:
        return
    for spec in (StableKernel(0.7, 2.0),
                 VariableOrderKernel(OrderField.sinusoidal(0.5, 0.2, 1.0)),
                 ModulatedKernel(StableKernel(0.5), OscillatoryModulation(0.5, 4.0))):
        assert eval_kernel(spec, x, y) == eval_kernel(spec, y, x)


@pytest.mark.parametrize("R,expected", [(1.0, 4.0), (0.25, 8.0)])
def test_tail_mass_stable(stable, R, expected):
    assert tail_mass(stable, 0.0, R) == pytest.approx(expected, rel=1e-10)


def test_tail_mass_truncated_kernel_is_zero(stable):
    assert tail_mass(stable.truncated(1.0), 0.0, 1.0) == 0.0


def test_tail_mass_d2_matches_closed_form():
    k = StableKernel(0.8, 1.0, 2)
    # int_{|w|>R} |w|^(-2-a) dw = 2 pi R^-a / a
    assert tail_mass(k, [0.3, -0.1], 0.5) == pytest.approx(2 * math.pi * 0.5**-0.8 / 0.8,
                                                           rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(1.01, 4.0))
def test_tail_mass_nonincreasing_in_R(R, factor):
    k = VariableOrderKernel(OrderField.sinusoidal(0.5, 0.2, 1.0))
    assert tail_mass(k, 0.2, R * factor) <= tail_mass(k, 0.2, R) * (1 + 1e-12)


def test_verify_bounds_stable_passes(stable):
    plan = SamplingPlan(center=0.0, radius=0.1, check_defect=True)
    rep = verify_bounds(stable, plan, STABLE_BOUNDS)
    assert rep.passed
    assert {"two-sided", "tail", "local-lower", "defect"} <= set(rep.names())
    for r in rep.results:
        assert r.violation_ratio <= 1 + 1e-9


def test_verify_bounds_false_tail_constant(stable):
    bounds = KernelBounds(kappa1=1, kappa2=1, beta1=0.5, beta2=0.5, kappa3=3.9, kappa4=1,
                          alpha=0.5)
    rep = verify_bounds(stable, SamplingPlan(), bounds)
    assert not rep.passed
    tail = rep["tail"]
    assert not tail.passed
    assert tail.witness_value == pytest.approx(4.0, rel=1e-10)
    assert tail.violation_ratio == pytest.approx(4.0 / 3.9, rel=1e-10)
    assert rep["two-sided"].passed


@pytest.mark.parametrize("change", [
    {"kappa2": 2.0}, {"kappa3": 5.0}, {"kappa1": 0.5}, {"kappa4": 0.5},
])
def test_verify_bounds_monotone_in_constants(stable, change):
    plan = SamplingPlan(center=0.0, radius=0.1, n_random_pairs=300)
    base = verify_bounds(stable, plan, STABLE_BOUNDS)
    looser = verify_bounds(stable, plan, KernelBounds(**{**STABLE_BOUNDS.__dict__, **change}))
    for r in base.results:
        assert looser[r.name].violation_ratio <= r.violation_ratio + 1e-12
        assert looser[r.name].passed or not r.passed


def test_variable_order_local_lower_bound():
    field = OrderField.sinusoidal(0.5, 0.2, 1.0)     # s in [0.3, 0.7]
    k = VariableOrderKernel(field, c=1.0)
    r = 0.1
    z = np.linspace(-3 * r, 3 * r, 2001)
    alpha = float(field(z[:, None]).min())
    bounds = KernelBounds(kappa1=1, kappa2=1, beta1=0.3, beta2=0.7, kappa3=10.0,
                          kappa4=math.exp(-field.log_lip), alpha=alpha)
    rep = verify_bounds(k, SamplingPlan(center=0.0, radius=r), bounds)
    assert rep["local-lower"].passed
    assert rep["order-band"].passed
    assert rep["order-modulus"].passed
    assert "log" in rep["order-modulus"].note


def test_variable_order_power_of_order_difference():
    field = OrderField.sinusoidal(0.5, 0.2, 1.0)
    rng = np.random.default_rng(3)
    x = rng.uniform(-3, 3, 5000)
    dist = np.exp(rng.uniform(np.log(1e-9), 0, 5000))
    y = x + dist * rng.choice([-1, 1], 5000)
    v = dist ** (field(x[:, None]) - field(y[:, None]))
    c = field.log_lip
    assert np.all(v >= math.exp(-c)) and np.all(v <= math.exp(c))


def test_constant_order_field_rejects_range():
    with pytest.raises(ConfigurationError):
        OrderField.sinusoidal(0.2, 0.3)


def test_modulated_kernel_within_band():
    base = StableKernel(0.5)
    k = ModulatedKernel(base, OscillatoryModulation(0.5, 8.0))
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-2, 2, (2, 1000, 1))
    ratio = k(x, y) / base(x, y)
    assert np.all((ratio >= 0.5 - 1e-15) & (ratio <= 1.5 + 1e-15))


def test_tabulated_kernel_symmetrised(tmp_path):
    grid = np.linspace(-1, 1, 5)
    rows = ["x,y,value"]
    for i, a in enumerate(grid):
        for j, b in enumerate(grid):
            rows.append(f"{a},{b},{1.0 + (i > j)}")
    path = tmp_path / "k.csv"
    path.write_text("\n".join(rows) + "\n")
    k = TabulatedKernel.from_csv(path)
    assert eval_kernel(k, -0.5, 0.5) == pytest.approx(1.5)
    assert eval_kernel(k, 0.5, -0.5) == pytest.approx(1.5)


def test_bounds_reject_empty_band():
    with pytest.raises(ConfigurationError):
        KernelBounds(kappa1=2.0, kappa2=1.0)
