import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from jumplab import (
    ExitTimeMonteCarlo, HeatSemigroup, HolderExponent, LatticeChain, Resolvent, StableKernel,
    semigroup_apply,
)
from jumplab.exceptions import ConfigurationError


@pytest.fixture(scope="module")
def chain():
    return LatticeChain(StableKernel(0.5), n=16, box=((-1, 1),)).fit()


def test_lattice_chain_fit(chain):
    assert chain.n_sites_ == 33
    assert chain.points_.shape == (33, 1)
    f = np.ones(33)
    assert np.all(chain.apply_generator(f) == 0.0)
    assert chain.energy(f) == pytest.approx(0.0, abs=1e-12)


def test_params_roundtrip(chain):
    params = chain.get_params()
    assert params["n"] == 16 and params["mode"] == "conservative"
    c2 = clone(chain)
    assert not hasattr(c2, "generator_")
    assert c2.get_params()["n"] == 16


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        LatticeChain(StableKernel(0.5)).apply_generator(np.ones(3))
    with pytest.raises(ConfigurationError):
        LatticeChain().fit()


def test_heat_semigroup_transform(chain):
    rng = np.random.default_rng(0)
    F = rng.normal(size=(33, 3))
    unif = HeatSemigroup(chain, t=0.2).fit().transform(F)
    spec = HeatSemigroup(chain, t=0.2, method="spectral").fit_transform(F)
    assert unif.shape == (33, 3)
    assert np.allclose(unif, spec, atol=1e-9)
    assert np.allclose(unif[:, 1], semigroup_apply(chain.generator_, 0.2, F[:, 1]))
    with pytest.raises(ConfigurationError):
        HeatSemigroup(chain).fit().transform(np.ones(5))


def test_resolvent_transform(chain):
    out = Resolvent(chain, lam=4.0).fit().transform(np.ones(33))
    assert out.shape == (33,)
    assert np.all(out == 0.25)


def test_exit_time_monte_carlo():
    mc = ExitTimeMonteCarlo(LatticeChain(StableKernel(0.5), n=32, box=((-2, 2),), mode="killed"),
                            radius=0.2, times=(0.0, 0.05, 0.2), n_paths=500, seed=1,
                            mean_exit=True).fit()
    assert mc.probabilities_[0] == 0.0
    assert np.all(np.diff(mc.probabilities_) >= 0)
    assert mc.stderr_.shape == (3,)
    assert mc.mean_exit_.value > 0


def test_holder_exponent_estimator():
    x = np.linspace(-1, 1, 201)
    est = HolderExponent().fit(x[:, None], 3 * x)
    assert est.exponent_ == pytest.approx(1.0, abs=0.01)
    d = np.array([0.01, 0.1])
    assert np.allclose(est.predict(d), est.constant_ * d**est.exponent_)
