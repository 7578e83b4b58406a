"""Spectral calculus of a finite symmetric chain.

The generator ``A`` is self-adjoint in ``L^2(nu)``, so ``-A = sum mu_i phi_i
<phi_i, .>_nu`` with a ``nu``-orthonormal eigenbasis.  The heat kernel, the
semigroup and the resolvent follow from it and are cross-checked against
uniformization and direct solves.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.stats import poisson

from ._validation import check_scalar, check_site_function
from .chain import dirichlet_form
from .exceptions import CapabilityError, ConfigurationError, InsufficientDataError, NumericError

DENSE_LIMIT = 4096
POISSON_TAIL = 1e-10


@dataclass
class SpectralDecomp:
    """Eigenvalues ``mu`` of ``-A`` (ascending) and ``nu``-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    nu: float
    mode: str

    def coefficients(self, f):
        """``<f, phi_i>_nu`` for each mode."""
        return self.nu * (self.eigenvectors.T @ f)

    def apply(self, multiplier, f):
        """``sum_i m(mu_i) <f, phi_i> phi_i`` with the constant part handled exactly.

        In conservative mode ``f`` is split into its mean and a zero-mean part;
        the mean is multiplied by ``m(0)`` directly.
        """
        f = np.asarray(f, dtype=float)
        m = multiplier(self.eigenvalues.copy())
        if self.mode == "conservative":
            c = f.mean(axis=0)
            return multiplier(np.zeros(1))[0] * c + self._expand(m, f - c)
        return self._expand(m, f)

    def _expand(self, m, f):
        coef = self.coefficients(f)
        return self.eigenvectors @ (m[:, None] * coef if coef.ndim > 1 else m * coef)


def _dense(A):
    return A.rates if isinstance(A.rates, np.ndarray) else A.rates.toarray()


def spectral_decompose(A):
    """Full eigendecomposition of ``-A`` for at most 4096 sites.

    Raises
    ------
    CapabilityError
        Above the dense threshold; use :func:`semigroup_apply` instead.
    """
    if A.size > DENSE_LIMIT:
        raise CapabilityError(
            f"{A.size} sites exceeds the dense spectral limit {DENSE_LIMIT}; use "
            "semigroup_apply(method='uniformization') or resolvent()")
    M = -_dense(A)
    M = 0.5 * (M + M.T)
    mu, V = scipy.linalg.eigh(M)
    nu = A.lattice.nu
    return SpectralDecomp(mu, V / math.sqrt(nu), nu, A.mode)


@dataclass
class HeatKernelMatrix:
    """``p(t, x, y)`` with ``P_t f(x) = sum_y p(t, x, y) f(y) nu``."""

    t: float
    values: np.ndarray
    nu: float

    def apply(self, f):
        return self.values @ np.asarray(f, dtype=float) * self.nu

    def row_mass(self):
        return self.values.sum(axis=1) * self.nu


def heat_kernel(decomp, t):
    """``p(t, x, y) = sum_i exp(-mu_i t) phi_i(x) phi_i(y)``."""
    t = check_scalar(t, "t", lower=0, include_lower=False)
    Phi = decomp.eigenvectors
    p = (Phi * np.exp(-decomp.eigenvalues * t)) @ Phi.T
    return HeatKernelMatrix(t, 0.5 * (p + p.T), decomp.nu)


def semigroup_apply(A, t, f, method="uniformization", decomp=None):
    """``P_t f`` by uniformization (default) or from the spectral decomposition.

    Uniformization writes ``P_t = sum_k Pois(k; L t) P^k`` with ``P = I + A / L``
    and ``L = max |A_xx|``, truncated once the Poisson tail is below 1e-10; the
    last weight absorbs the remainder so the weights sum to one exactly.
    """
    t = check_scalar(t, "t", lower=0)
    f = check_site_function(f, A.size)
    if t == 0:
        return f.copy()
    if method == "spectral":
        decomp = decomp or spectral_decompose(A)
        return decomp.apply(lambda mu: np.exp(-mu * t), f)
    if method != "uniformization":
        raise ConfigurationError(f"unknown method {method!r}")
    R = A.rates if isinstance(A.rates, np.ndarray) else A.rates.tocsr()
    lam = float(np.max(-A.diagonal))
    if lam == 0:
        return f.copy()
    rate = lam * t
    kmax = int(poisson.isf(POISSON_TAIL, rate)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), rate)
    acc = 0.0
    for w in weights[:-1]:
        acc += w
    weights[-1] = 1.0 - acc
    v = f.copy()
    out = np.zeros_like(f)
    for k, w in enumerate(weights):
        out += w * v
        if k < kmax:
            v = v + (R @ v) / lam
    return out


def _solver(A, lam):
    M = lam * np.eye(A.size) - _dense(A) if A.size <= DENSE_LIMIT else None
    if M is not None:
        try:
            factor = scipy.linalg.cho_factor(0.5 * (M + M.T))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"resolvent matrix is not positive definite: {exc}") from None
        return lambda b: scipy.linalg.cho_solve(factor, b)
    lu = splu(sparse.csc_matrix(lam * sparse.identity(A.size) - sparse.csr_matrix(A.rates)))
    return lu.solve


def resolvent(A, lam, f, *, tol=1e-10):
    """``U^lam f``, the solution of ``(lam - A) u = f``.

    In conservative mode the mean of ``f`` is mapped to ``mean / lam`` directly.

    Raises
    ------
    NumericError
        If the relative residual exceeds ``tol``.
    """
    lam = check_scalar(lam, "lambda", lower=0, include_lower=False)
    f = check_site_function(f, A.size)
    solve = _solver(A, lam)
    if A.mode == "conservative":
        c = f.mean(axis=0)
        rest = f - c
        u = c / lam + solve(rest)
    else:
        u = solve(f)
    res = lam * u - A.rates @ u - f
    scale = np.max(np.abs(f)) if np.any(f) else 1.0
    if np.max(np.abs(res)) > tol * scale * max(1.0, lam):
        raise NumericError("resolvent solve did not meet the residual tolerance",
                           residual=float(np.max(np.abs(res))))
    return u


@dataclass
class ResolventIdentityReport:
    lhs: float
    rhs: float
    discrepancy: float
    quadratic_lhs: float
    quadratic_rhs: float
    quadratic_discrepancy: float

    @property
    def passed(self):
        return max(self.discrepancy, self.quadratic_discrepancy) <= 1e-8


def _rel(a, b, *scales):
    s = max(abs(a), abs(b), *map(abs, scales))
    return abs(a - b) / s if s > 0 else 0.0


def verify_resolvent_identity(C, A, lam, f, g):
    """Both sides of ``E(U f, g) = <f, g> - lam <U f, g>`` and of its ``g = U f`` form.

    In killed mode the form includes the death term ``sum kill u g nu``.
    """
    nu = A.lattice.nu
    f = check_site_function(f, A.size, "f")
    g = check_site_function(g, A.size, "g")
    u = resolvent(A, lam, f)

    def form(a, b):
        val = dirichlet_form(C, a, b)
        return val + nu * np.sum(A.kill * a * b) if A.mode == "killed" else val

    lhs = float(form(u, g))
    fg, ug = nu * float(f @ g), nu * float(u @ g)
    rhs = fg - lam * ug
    qlhs = float(form(u, u))
    fu, uu = nu * float(f @ u), nu * float(u @ u)
    qrhs = fu - lam * uu
    return ResolventIdentityReport(lhs, rhs, _rel(lhs, rhs, fg, lam * ug), qlhs, qrhs,
                                   _rel(qlhs, qrhs, fu, lam * uu))


@dataclass
class HarmonicSolution:
    center: np.ndarray
    radius: float
    values: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    residual: float


def solve_harmonic(A, ball, boundary):
    """Solve ``(A h)(x) = 0`` inside ``B(x0, r)`` with ``h = boundary`` outside.

    ``boundary`` is a site function (or a callable on site points); its
    interior values are ignored.  Killed chains send mass to a cemetery whose
    value is 0.
    """
    x0, r = ball
    pts = A.lattice.points
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    interior = np.linalg.norm(pts - x0, axis=1) < r * (1 - 1e-12)
    if not np.any(interior):
        raise ConfigurationError("the ball contains no lattice site")
    if np.all(interior):
        raise ConfigurationError("the ball must leave exterior sites for boundary data")
    g = boundary(pts) if callable(boundary) else boundary
    g = check_site_function(g, A.size, "boundary")
    R = _dense(A)
    I = np.flatnonzero(interior)
    B = np.flatnonzero(~interior)
    M = -R[np.ix_(I, I)]
    rhs = R[np.ix_(I, B)] @ g[B]
    try:
        hI = scipy.linalg.solve(0.5 * (M + M.T), rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericError(f"interior block is singular: {exc}") from None
    h = g.astype(float).copy()
    h[I] = hI
    Ah = R[I] @ h
    scale = np.max(np.abs(R[np.ix_(I, B)]) @ np.abs(g[B])) if np.any(g[B]) else 1.0
    return HarmonicSolution(x0, r, h, interior, g, float(np.max(np.abs(Ah)) / max(scale, 1e-300)))


@dataclass
class HolderFit:
    """``|u(x) - u(y)| <= constant |x - y|^exponent`` over the sampled pairs."""

    exponent: float
    constant: float
    residual: float
    pairs: int
    distance_range: tuple

    def as_record(self):
        return {"exponent": self.exponent, "constant": self.constant,
                "residual": self.residual, "pair_count": self.pairs,
                "distance_range": list(self.distance_range)}


def holder_fit(u, points, region=None, *, pairs="all", anchor=0.0, scales=None,
               noise_floor=1e-12, bins=24, min_pairs=10):
    """Fit a Hölder exponent to ``u`` from its modulus of continuity.

    The modulus ``w(delta) = max |u(x) - u(y)|`` over pairs at distance at
    most ``delta`` is sampled at log-spaced bins and fitted by least squares
    in log-log coordinates.  The constant is the envelope over all
    used pairs, not the regression intercept.

    Parameters
    ----------
    region : (center, radius), optional
        Only sites with ``|x - center| < radius`` are paired.
    pairs : {"all", "straddle"}
        ``straddle`` keeps pairs with ``x_1 <= anchor <= y_1``.
    scales : (lo, hi), optional
        Absolute distance range for the fit and the envelope.
    noise_floor : float
        Pairs with ``|u(x) - u(y)| < noise_floor * max|u|`` are dropped.

    Raises
    ------
    InsufficientDataError
        Fewer than ``min_pairs`` usable pairs or fewer than two distance bins.
    """
    u = np.asarray(u, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(len(u), -1)
    if region is not None:
        c, rad = region
        keep = np.linalg.norm(pts - np.atleast_1d(c), axis=1) < rad
        u, pts = u[keep], pts[keep]
    i, j = np.triu_indices(len(u), k=1)
    if pairs == "straddle":
        lo_, hi_ = np.minimum(pts[i, 0], pts[j, 0]), np.maximum(pts[i, 0], pts[j, 0])
        sel = (lo_ <= anchor) & (anchor <= hi_)
        i, j = i[sel], j[sel]
    elif pairs != "all":
        raise ConfigurationError(f"unknown pair policy {pairs!r}")
    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    diff = np.abs(u[i] - u[j])
    floor = noise_floor * (np.max(np.abs(u)) if u.size else 0.0)
    ok = (diff >= floor) & (diff > 0) & (dist > 0)
    if scales is not None:
        ok &= (dist >= scales[0]) & (dist <= scales[1])
    dist, diff = dist[ok], diff[ok]
    if dist.size < min_pairs:
        raise InsufficientDataError(f"only {dist.size} usable pairs (need {min_pairs})")
    edges = np.geomspace(dist.min(), dist.max() * (1 + 1e-12), bins + 1)
    which = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, bins - 1)
    # nondecreasing modulus: running maximum over all pairs up to each bin,
    # placed at the distance of the pair attaining it
    best = (-1.0, 0.0)
    points_used = {}
    for b in range(bins):
        m = which == b
        if np.any(m):
            k = np.argmax(diff[m])
            if diff[m][k] > best[0]:
                best = (diff[m][k], dist[m][k])
            points_used[best[1]] = best[0]
    xs = [math.log(d_) for d_ in points_used]
    ys = [math.log(v_) for v_ in points_used.values()]
    if len(xs) < 2:
        raise InsufficientDataError("all usable pairs fall into one distance bin")
    coef = np.polyfit(xs, ys, 1)
    gamma = float(coef[0])
    resid = np.asarray(ys) - np.polyval(coef, xs)
    constant = float(np.max(diff / dist**gamma))
    return HolderFit(gamma, constant, float(np.sqrt(np.mean(resid**2))), int(dist.size),
                     (float(dist.min()), float(dist.max())))


def semigroup_preimage(decomp, lam, t, f):
    """``h = sum (lam + mu_i) exp(-mu_i t) <f, phi_i> phi_i``, for which ``U^lam h = P_t f``."""
    return decomp.apply(lambda mu: (lam + mu) * np.exp(-mu * t), f)
