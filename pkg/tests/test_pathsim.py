import math

import numpy as np
import pytest
from scipy import stats

from jumplab import (
    MeyerChain, StableKernel, assemble_generator, build_conductances, build_lattice,
    chain_from_rates, estimate_exit_prob, estimate_mean_exit, exit_times, jump_counts,
    levy_system_check, occupation_fractions, simulate_meyer, simulate_path,
)
from jumplab.exceptions import ConfigurationError, DominatingRateError
from jumplab.io import read_csv

Q = 2.0


@pytest.fixture(scope="module")
def two_site():
    return chain_from_rates([[0, Q], [Q, 0]])


@pytest.fixture(scope="module")
def stable_chain():
    lat = build_lattice(1, 64, [(-2, 2)])
    k = StableKernel(0.5)
    return assemble_generator(build_conductances(k, lat), "killed", k)


@pytest.fixture(scope="module")
def meyer_pair():
    lat = build_lattice(1, 32, [(-2, 2)])
    k = StableKernel(0.5)
    small = assemble_generator(build_conductances(k.truncated(1.0), lat), "killed", k.truncated(1.0))
    full = assemble_generator(build_conductances(k, lat), "killed", k)
    return small, full


def test_zero_horizon_has_no_events(stable_chain):
    p = simulate_path(stable_chain, 0.0, 0.0, rng=3)
    assert p.times == [] and p.sites == [] and not p.killed


def test_path_is_reproducible(stable_chain):
    a = simulate_path(stable_chain, 0.0, 1.0, rng=(7, 11))
    b = simulate_path(stable_chain, 0.0, 1.0, rng=(7, 11))
    c = simulate_path(stable_chain, 0.0, 1.0, rng=(7, 12))
    assert a.times == b.times and a.sites == b.sites
    assert a.times != c.times
    assert all(t0 < t1 for t0, t1 in zip(a.times, a.times[1:]))


def test_path_csv(tmp_path, stable_chain):
    p = simulate_path(stable_chain, 0.0, 0.5, rng=1)
    rows = read_csv(p.to_csv(tmp_path / "path.csv"))
    assert rows[0] == {"time": "0.0", "site_index": str(p.start)}
    assert len(rows) == 1 + len(p.times) + p.killed


def test_absorbing_site_stays():
    A = chain_from_rates(np.zeros((2, 2)))
    p = simulate_path(A, 0.0, 5.0, rng=0)
    assert p.times == [] and p.end_time == 5.0


def test_two_site_jump_count_is_poisson(two_site):
    t, N = 1.5, 10_000
    jumps = jump_counts(two_site, 0.0, t, N, seed=4)["jumps"]
    se = jumps.std(ddof=1) / math.sqrt(N)
    assert abs(jumps.mean() - Q * t) <= 3 * se
    assert jumps.var() == pytest.approx(Q * t, rel=0.05)


def test_three_site_occupation_uniform():
    rates = [[0, 1.0, 0.5], [1.0, 0, 2.0], [0.5, 2.0, 0]]
    A = chain_from_rates(rates)
    occ, se = occupation_fractions(A, 0.0, 100 / 0.5, 2000, seed=9, return_stderr=True)
    assert occ.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(occ - 1 / 3) <= 3 * se)


def test_exit_probability_zero_at_zero_time(stable_chain):
    est = estimate_exit_prob(stable_chain, 0.0, 0.2, 0.0, 500, seed=1)
    assert est.value == 0.0 and est.stderr == 0.0


def test_exit_probability_monotone_in_t(stable_chain):
    lo, hi = estimate_exit_prob(stable_chain, 0.0, 0.2, [0.1, 0.2], 4000, seed=2)
    assert hi.value >= lo.value - 3 * math.hypot(lo.stderr, hi.stderr)
    assert hi.value >= lo.value  # coupled on the same paths


def test_exit_ball_must_fit(stable_chain):
    with pytest.raises(ConfigurationError):
        estimate_exit_prob(stable_chain, 0.0, 1.5, 0.1, 500, seed=0)


def test_mean_exit_increasing_in_radius(stable_chain):
    ests = [estimate_mean_exit(stable_chain, 0.0, r, 2000, seed=5) for r in (0.1, 0.2, 0.4)]
    for a, b in zip(ests, ests[1:]):
        assert b.value - a.value > -3 * math.hypot(a.stderr, b.stderr)
        assert b.value > a.value
    assert not any(e.flagged for e in ests)


def test_exit_times_are_thread_independent(stable_chain):
    a = exit_times(stable_chain, 0.0, 0.2, 1.0, 3000, seed=8, threads=1)
    b = exit_times(stable_chain, 0.0, 0.2, 1.0, 3000, seed=8, threads=3)
    assert np.array_equal(a, b)


def test_levy_zero_function(stable_chain):
    rep = levy_system_check(stable_chain, lambda x, y: 0.0 * x[..., 0], 0.5, 500, seed=0)
    assert rep.jump_mean == 0.0 and rep.integral_mean == 0.0 and rep.passed


def test_levy_two_site_transition_count(two_site):
    T, N = 1.0, 10_000

    def f(x, y):
        return ((x[..., 0] == 0) & (y[..., 0] == 1)).astype(float)

    rep = levy_system_check(two_site, f, T, N, seed=3, x0=0.0)
    exact = Q * (T / 2 + (1 - math.exp(-2 * Q * T)) / (4 * Q))
    assert rep.passed
    # the time integral has small variance, so it pins the exact count tightly
    assert rep.integral_mean == pytest.approx(exact, rel=0.01)
    assert rep.jump_mean == pytest.approx(exact, rel=0.03)


def test_levy_stable_chain(stable_chain):
    rep = levy_system_check(stable_chain,
                            lambda x, y: np.minimum(np.sum((x - y) ** 2, axis=-1), 1.0),
                            0.5, 10_000, seed=6)
    assert rep.passed


def test_meyer_without_large_jumps(meyer_pair):
    small, _ = meyer_pair
    chain = MeyerChain(small, small, kappa3=1.0)
    counts = jump_counts(chain, 0.0, 0.5, 4000, seed=1)
    direct = jump_counts(small, 0.0, 0.5, 4000, seed=2)
    assert counts["spliced"].sum() == 0
    se = math.hypot(counts["jumps"].std(), direct["jumps"].std()) / math.sqrt(4000)
    assert abs(counts["jumps"].mean() - direct["jumps"].mean()) <= 3 * se
    assert simulate_meyer(chain, None, 0.0, 0.5, rng=1).spliced == 0


def test_meyer_spliced_rate_bounded(meyer_pair):
    small, full = meyer_pair
    kappa3 = 4.0 * 1.05
    chain = MeyerChain(small, full, kappa3)
    t, N = 0.5, 10_000
    spliced = jump_counts(chain, 0.0, t, N, seed=3)["spliced"]
    se = spliced.std(ddof=1) / math.sqrt(N)
    assert spliced.mean() <= 2 * kappa3 * t + 3 * se
    assert spliced.mean() > 0


def test_meyer_dominating_rate_error(meyer_pair):
    small, full = meyer_pair
    with pytest.raises(DominatingRateError):
        MeyerChain(small, full, kappa3=3.0)


def test_meyer_exit_law_matches_direct(meyer_pair):
    small, full = meyer_pair
    chain = MeyerChain(small, full, 4.2)
    a = exit_times(chain, 0.0, 0.5, 50.0, 2000, seed=10)
    b = exit_times(full, 0.0, 0.5, 50.0, 2000, seed=11)
    assert np.isfinite(a).all() and np.isfinite(b).all()
    assert stats.ks_2samp(a, b).pvalue > 0.05
