import numpy as np
import pytest

from jumplab import (
    StableKernel, constant_sequence, oscillatory_sequence, resolvent_convergence,
    semigroup_convergence, verify_uic, weak_convergence_probe,
)
from jumplab.convergence import (
    antisymmetric_bump, bump, check_resolution, default_test_functions, pair_integral,
    tensor_bump,
)
from jumplab.exceptions import ConfigurationError

ETAS = 2.0 ** -np.arange(1, 9)
FREQS = (2, 4, 8, 16)


@pytest.fixture(scope="module")
def limit():
    return StableKernel(0.5)


@pytest.fixture(scope="module")
def osc(limit):
    return oscillatory_sequence(limit, 0.5, FREQS)


def f_bump(p):
    return bump(p[:, 0])


def test_uic_constant_sequence_closed_form(limit):
    rep = verify_uic(constant_sequence(limit), ETAS)
    assert np.allclose(rep.far_tail, 4 * ETAS**0.5, rtol=1e-10)
    assert np.allclose(rep.near_moment, (4 / 3) * ETAS**1.5, rtol=1e-10)
    assert rep.passed
    assert rep.far_tail[-1] < 0.1 * rep.far_tail[0]


def test_uic_oscillatory_within_band(osc):
    rep = verify_uic(osc, ETAS)
    assert np.all(rep.far_tail <= 1.5 * 4 * ETAS**0.5 * (1 + 1e-9))
    assert np.all(rep.near_moment <= 1.5 * (4 / 3) * ETAS**1.5 * (1 + 1e-9))
    assert rep.passed


def test_uic_rejects_bad_grid(osc):
    with pytest.raises(ConfigurationError):
        verify_uic(osc, [0.1, 0.2])


def test_pair_integral_antisymmetric_vanishes(limit):
    psi = antisymmetric_bump(0.0, 0.5, 0.5)
    val, err = pair_integral(limit, psi, 0.05)
    assert abs(val) <= 1e-9 + err


def test_pair_integral_matches_quadrature(limit):
    from scipy import integrate

    psi = tensor_bump(0.0, 1.0, 0.5)
    val, _ = pair_integral(limit, psi, 0.05)
    # the supports are 0.5 apart, so eta does not cut them
    ref, _ = integrate.dblquad(lambda y, x: psi(np.array([x]), np.array([y]))[0]
                               * abs(x - y) ** -1.5, -0.5, 0.5, 0.5, 1.5, epsabs=1e-13)
    assert val == pytest.approx(ref, rel=1e-7)


def test_weak_probe_constant_sequence_zero_gap(limit):
    rep = weak_convergence_probe(constant_sequence(limit), 0.05)
    assert np.all(np.abs(rep.gaps) <= 1e-9)
    assert rep.passed


def test_weak_probe_oscillatory_decreasing(limit):
    rep = weak_convergence_probe(oscillatory_sequence(limit), 0.05, default_test_functions())
    assert rep.passed
    sym = [j for j, name in enumerate(rep.names) if "anti" not in name]
    for j in sym:
        assert np.all(np.diff(rep.gaps[:, j]) < 0)
    anti = [j for j, name in enumerate(rep.names) if "anti" in name]
    assert np.all(np.abs(rep.values[:, anti]) <= 1e-8)


def test_check_resolution(osc):
    with pytest.raises(ConfigurationError, match="n >= 21"):
        check_resolution(osc, 16)
    assert check_resolution(osc, 64) == 64


def test_semigroup_convergence_decreasing(osc):
    tab = semigroup_convergence(osc, 0.5, f_bump, 128, [(-1, 1)], box=[(-2, 2)], refine=64)
    assert tab.decreasing
    assert tab.final_ratio < 0.1
    assert tab.refinement_change < 0.25


def test_semigroup_convergence_trivial_cases(limit, osc):
    tab = semigroup_convergence(constant_sequence(limit), 0.5, f_bump, 64, [(-1, 1)],
                                box=[(-2, 2)])
    assert np.all(tab.errors <= 1e-10)
    tab = semigroup_convergence(osc, 0.0, f_bump, 64, [(-1, 1)], box=[(-2, 2)])
    assert np.all(tab.errors == 0.0)


def test_resolvent_convergence(osc, limit):
    tab = resolvent_convergence(osc, 1.0, f_bump, 128, [(-1, 1)], box=[(-2, 2)])
    assert tab.decreasing and tab.final_ratio < 0.1
    assert tab.diagnostics["energy_ok"]
    tab = resolvent_convergence(osc, 2.0, lambda p: np.ones(len(p)), 64, [(-1, 1)],
                                box=[(-2, 2)])
    assert np.all(tab.errors == 0.0)
    tab = resolvent_convergence(constant_sequence(limit), 1.0, f_bump, 64, [(-1, 1)],
                                box=[(-2, 2)], diagnostics=False)
    assert np.all(tab.errors <= 1e-10)
