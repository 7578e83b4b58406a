"""scikit-learn style wrappers around the lattice chain and its operators.

Site functions play the role of samples: ``transform`` takes an array of
shape ``(n_sites,)`` or ``(n_sites, k)`` and returns one of the same shape.
The wrappers hold parameters only until ``fit``, which builds the lattice
generator; fitted state carries a trailing underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .chain import assemble_generator, build_conductances, build_lattice, dirichlet_form
from .exceptions import ConfigurationError
from .operators import holder_fit, resolvent, semigroup_apply, spectral_decompose
from .pathsim import estimate_exit_prob, estimate_mean_exit


def _site_array(F, n_sites):
    F = np.asarray(F, dtype=float)
    flat = F.ndim == 1
    F2 = check_array(F.reshape(-1, 1) if flat else F, dtype=float)
    if F2.shape[0] != n_sites:
        raise ConfigurationError(f"expected {n_sites} site values, got {F2.shape[0]}")
    return F2, flat


class LatticeChain(BaseEstimator):
    """Cell-averaged lattice chain of a kernel.

    Parameters
    ----------
    kernel : KernelSpec
    n : int
        Lattice points per unit length.
    box : sequence of (lo, hi)
    mode : {"conservative", "killed"}
    policy : {"literal", "moment-matched"}
    quad_order : int
    """

    def __init__(self, kernel=None, n=64, box=((-1.0, 1.0),), mode="conservative",
                 policy="literal", quad_order=8):
        self.kernel = kernel
        self.n = n
        self.box = box
        self.mode = mode
        self.policy = policy
        self.quad_order = quad_order

    def fit(self, X=None, y=None):
        if self.kernel is None:
            raise ConfigurationError("LatticeChain needs a kernel")
        self.lattice_ = build_lattice(self.kernel.dimension, self.n, self.box)
        self.conductances_ = build_conductances(self.kernel, self.lattice_, self.quad_order,
                                                self.policy)
        self.generator_ = assemble_generator(self.conductances_, self.mode, self.kernel)
        self.n_sites_ = self.lattice_.size
        return self

    @property
    def points_(self):
        check_is_fitted(self, "lattice_")
        return self.lattice_.points

    def apply_generator(self, F):
        check_is_fitted(self, "generator_")
        F2, flat = _site_array(F, self.n_sites_)
        out = self.generator_.rates @ F2
        return out[:, 0] if flat else out

    def energy(self, F, G=None):
        """Discrete Dirichlet form of site functions."""
        check_is_fitted(self, "conductances_")
        return dirichlet_form(self.conductances_, F, G)


class _ChainOperator(TransformerMixin, BaseEstimator):
    def fit(self, X=None, y=None):
        chain = self.chain if self.chain is not None else LatticeChain()
        self.chain_ = chain if hasattr(chain, "generator_") else chain.fit()
        self.generator_ = self.chain_.generator_
        return self

    def transform(self, X):
        check_is_fitted(self, "generator_")
        F2, flat = _site_array(X, self.generator_.size)
        out = np.column_stack([self._apply(F2[:, j]) for j in range(F2.shape[1])])
        return out[:, 0] if flat else out


class HeatSemigroup(_ChainOperator):
    """``F -> P_t F`` by uniformization or the spectral decomposition."""

    def __init__(self, chain=None, t=1.0, method="uniformization"):
        self.chain = chain
        self.t = t
        self.method = method

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.decomp_ = spectral_decompose(self.generator_) if self.method == "spectral" else None
        return self

    def _apply(self, f):
        return semigroup_apply(self.generator_, self.t, f, self.method, self.decomp_)


class Resolvent(_ChainOperator):
    """``F -> U^lam F = (lam - A)^-1 F``."""

    def __init__(self, chain=None, lam=1.0):
        self.chain = chain
        self.lam = lam

    def _apply(self, f):
        return resolvent(self.generator_, self.lam, f)


class ExitTimeMonteCarlo(BaseEstimator):
    """Monte Carlo exit statistics of ``B(center, radius)``.

    ``fit`` estimates ``P(tau < t)`` for every ``t`` in ``times`` on coupled
    paths and, if ``mean_exit`` is set, the mean exit time on fresh paths.
    """

    def __init__(self, chain=None, center=0.0, radius=0.1, times=(0.01,), n_paths=10000,
                 seed=0, threads=1, margin=1.0, mean_exit=False):
        self.chain = chain
        self.center = center
        self.radius = radius
        self.times = times
        self.n_paths = n_paths
        self.seed = seed
        self.threads = threads
        self.margin = margin
        self.mean_exit = mean_exit

    def fit(self, X=None, y=None):
        chain = self.chain if hasattr(self.chain, "generator_") else self.chain.fit()
        A = chain.generator_
        est = estimate_exit_prob(A, self.center, self.radius, list(self.times), self.n_paths,
                                 self.seed, margin=self.margin, threads=self.threads)
        self.estimates_ = est
        self.probabilities_ = np.array([e.value for e in est])
        self.stderr_ = np.array([e.stderr for e in est])
        if self.mean_exit:
            self.mean_exit_ = estimate_mean_exit(A, self.center, self.radius, self.n_paths,
                                                 self.seed + 1, margin=self.margin,
                                                 threads=self.threads)
        return self


class HolderExponent(BaseEstimator):
    """Fit ``|u(x) - u(y)| <= c |x - y|^gamma``; ``X`` are points, ``y`` values."""

    def __init__(self, region=None, pairs="all", anchor=0.0, scales=None, bins=24):
        self.region = region
        self.pairs = pairs
        self.anchor = anchor
        self.scales = scales
        self.bins = bins

    def fit(self, X, y):
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1))
        y = np.asarray(y, dtype=float)
        self.fit_ = holder_fit(y, X, self.region, pairs=self.pairs, anchor=self.anchor,
                               scales=self.scales, bins=self.bins)
        self.exponent_ = self.fit_.exponent
        self.constant_ = self.fit_.constant
        return self

    def predict(self, distances):
        """Envelope ``c delta^gamma`` at the given distances."""
        check_is_fitted(self, "fit_")
        d = np.asarray(distances, dtype=float)
        return self.constant_ * d**self.exponent_
