
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_legendre

from jumplab import (
    KernelSpec, StableKernel, assemble_generator, build_conductances, build_lattice,
    chain_from_rates, compute_L1, dirichlet_form, export_triples,
)
from jumplab.exceptions import ConfigurationError, DivergentEntryError

# Cell-pair averages for the d=1 stable kernel (alpha=0.5, n=10), computed with
# mpmath from n^2 (Phi((k+1)h) + Phi((k-1)h) - 2 Phi(kh)), Phi(u) = u^0.5/(0.5 * -0.5).
C_1D = {1: 74.0967746134871708, 2: 12.1907469911647328, 10: 1.00314151173386136}
# d=2, alpha=0.5, n=4: scipy dblquad of the tent-weighted kernel over offsets.
C_2D = {(2, 1): 4.810064384933927, (3, 0): 2.1788118127491662}


class ConstantKernel(KernelSpec):
    family = "constant"

    def __init__(self, value):
        super().__init__(1)
        self.value = value

    def _evaluate(self, x, y, r):
        return np.full(np.shape(r), self.value)


def test_build_lattice_1d():
    lat = build_lattice(1, 4, [(-1, 1)])
    assert lat.size == 9
    assert np.allclose(lat.points[:, 0], np.linspace(-1, 1, 9))
    assert lat.nu == 0.25


def test_build_lattice_2d():
    lat = build_lattice(2, 2, [(0, 1), (0, 1)])
    assert lat.size == 9
    assert lat.nu == 0.25


def test_build_lattice_box_too_small():
    with pytest.raises(ConfigurationError):
        build_lattice(1, 4, [(0, 0.1)])


def test_constant_kernel_conductance_exact():
    lat = build_lattice(1, 8, [(-1, 1)])
    C = build_conductances(ConstantKernel(2.5), lat)
    i, j = lat.index(-0.5), lat.index(0.5)
    assert C.entries[i, j] == pytest.approx(2.5, rel=1e-14)


@pytest.mark.parametrize("k", sorted(C_1D))
def test_stable_conductance_oracle(stable, k):
    lat = build_lattice(1, 10, [(-1.5, 1.5)])
    C = build_conductances(stable, lat)
    assert C.entries[lat.index(0.0), lat.index(k / 10)] == pytest.approx(C_1D[k], rel=1e-10)


def test_stable_conductance_near_kernel_value():
    # cell averaging adds J''(1) Var / 2 with Var = h^2 / 6 for the tent
    h = 0.1
    assert C_1D[10] - 1.0 == pytest.approx(1.5 * 2.5 * h**2 / 12, rel=0.01)


def test_conductance_midpoint_error_is_second_order(stable):
    # C(0, 1) - J(0, 1) shrinks by 4 each time n doubles
    errs = []
    for n in (8, 16, 32, 64):
        lat = build_lattice(1, n, [(-1.5, 1.5)])
        C = build_conductances(stable, lat)
        errs.append(C.entries[lat.index(0.0), lat.index(1.0)] - 1.0)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.allclose(ratios, 4.0, rtol=0.02)


def test_stable_conductance_matches_direct_quadrature(stable):
    # independent tensor Gauss rule for a separated pair
    n, k = 10, 5
    t, w = roots_legendre(40)
    xi = 0.5 * t / n
    zeta = k / n + 0.5 * t / n
    vals = np.abs(xi[:, None] - zeta[None, :]) ** -1.5
    oracle = n**2 * (w[:, None] * w[None, :] * vals).sum() * (0.5 / n) ** 2
    lat = build_lattice(1, n, [(-1, 1)])
    C = build_conductances(stable, lat)
    assert C.entries[lat.index(0.0), lat.index(0.5)] == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("offset", sorted(C_2D))
def test_stable_conductance_2d(offset):
    lat = build_lattice(2, 4, [(-1, 1), (-1, 1)])
    C = build_conductances(StableKernel(0.5, 1.0, 2), lat)
    j = lat.index([offset[0] / 4, offset[1] / 4])
    assert C.entries[lat.index([0, 0]), j] == pytest.approx(C_2D[offset], rel=1e-10)


def test_literal_policy_diverges_for_large_order():
    lat = build_lattice(1, 8, [(-1, 1)])
    with pytest.raises(DivergentEntryError):
        build_conductances(StableKernel(1.5), lat)


def test_moment_matched_neighbour_value():
    n = 8
    h = 1 / n
    lat = build_lattice(1, n, [(-1, 1)])
    C = build_conductances(StableKernel(1.5), lat, policy="moment-matched")
    m2 = 2 * (h / 2) ** 0.5 / 0.5
    expected = m2 / (2 * h**2 * h)
    assert C.entries[lat.index(0.0), lat.index(h)] == pytest.approx(expected, rel=1e-10)
    assert np.isfinite(C.entries).all()


def test_conservative_row_sums_exactly_zero(small_chain):
    assert np.all(small_chain.rates.sum(axis=1) == 0.0)
    assert np.all(small_chain.kill == 0.0)


def test_rates_symmetric_nonnegative(small_killed):
    R = small_killed.rates.copy()
    np.fill_diagonal(R, 0)
    assert np.array_equal(R, R.T)
    assert R.min() >= 0
    assert np.all(small_killed.rates.sum(axis=1) + small_killed.kill == 0.0)


def test_kill_rate_matches_tail_functional(stable):
    lat = build_lattice(1, 256, [(-3, 3)])
    A = assemble_generator(build_conductances(stable, lat), "killed")
    c = lat.index(0.0)
    expected = 2 * compute_L1(stable, 0.0, 3.0).value
    assert A.kill[c] == pytest.approx(expected, rel=0.05)
    assert A.kill[c] == pytest.approx(4.6173, rel=1e-3)


def test_generator_symmetric_in_nu(small_killed, rng):
    A, nu = small_killed.rates, small_killed.lattice.nu
    for _ in range(10):
        f, g = rng.normal(size=(2, A.shape[0]))
        lhs = (A @ f) @ g * nu
        rhs = f @ (A @ g) * nu
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_form_of_constant_vanishes(small_chain, rng):
    C = small_chain.conductances
    g = rng.normal(size=small_chain.size)
    assert dirichlet_form(C, np.full(small_chain.size, 3.0), g) == pytest.approx(0, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_form_nonnegative(seed):
    lat = build_lattice(1, 8, [(-1, 1)])
    C = _cached_conductances(lat)
    f = np.random.default_rng(seed).normal(size=lat.size)
    assert dirichlet_form(C, f) >= 0


_CACHE = {}


def _cached_conductances(lat):
    if "C" not in _CACHE:
        _CACHE["C"] = build_conductances(StableKernel(0.5), lat)
    return _CACHE["C"]


def test_form_matches_generator(small_chain, rng):
    f, g = rng.normal(size=(2, small_chain.size))
    E = dirichlet_form(small_chain.conductances, f, g)
    rhs = -(small_chain.rates @ f) @ g * small_chain.lattice.nu
    assert E == pytest.approx(rhs, rel=1e-10)


def test_killed_form_converges_to_continuum(stable):
    # continuum energy of exp(-1/(1-x^2)) under |x-y|^-1.5, by mpmath
    E = 1.4215252579218997
    errs = []
    for n in (32, 64, 128):
        lat = build_lattice(1, n, [(-3, 3)])
        A = assemble_generator(build_conductances(stable, lat), "killed")
        x = lat.points[:, 0]
        f = np.where(np.abs(x) < 1, np.exp(-1 / np.maximum(1 - x**2, 1e-300)), 0.0)
        errs.append(abs(-(A.rates @ f) @ f * lat.nu / E - 1))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_chain_from_rates_two_site():
    A = chain_from_rates([[0, 3.0], [3.0, 0]])
    assert np.array_equal(A.rates, [[-3.0, 3.0], [3.0, -3.0]])
    assert A.mode == "conservative"


def test_chain_from_rates_rejects_asymmetric():
    with pytest.raises(ConfigurationError):
        chain_from_rates([[0, 1.0], [2.0, 0]])


def test_export_triples(tmp_path, small_chain):
    path = tmp_path / "A.csv"
    export_triples(small_chain.rates, small_chain.lattice, path, mode="conservative")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# n=16")
    assert lines[1] == "row,col,value"
    assert len(lines) - 2 == np.count_nonzero(small_chain.rates)
    r, c, v = lines[2].split(",")
    assert float(v) == small_chain.rates[int(r), int(c)]


def test_bad_mode(small_chain):
    with pytest.raises(ConfigurationError):
        assemble_generator(small_chain.conductances, "reflecting")
