"""Exit functionals of a jump kernel and their scaling checks.

``L1(x, s)`` is the jump intensity beyond distance ``s``, ``L2(x, s)`` the
second moment of jumps within ``s``, and ``L(z0, r)`` combines suprema of
both over the ball ``B(z0, 3r)``; it controls how fast the process leaves
small balls.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_point, check_scalar
from .exceptions import ConfigurationError
from .kernels import VariableOrderKernel, radial_moments
from .quadrature import sphere_area, sphere_rule

INNER_MODES = ("at-scale", "dyadic")


@dataclass
class FunctionalValue:
    """A functional value with its quadrature error estimate.

    For ``kind == "L"`` the value is a grid maximum, i.e. a lower estimate
    of the true supremum; ``details`` records both terms and their maximisers.
    """

    kind: str
    center: tuple
    scale: float
    value: float
    quadrature_error: float
    alpha: float = None
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _l1(spec, points, s):
    return radial_moments(spec, points, s, np.inf, 0.0)


def _l2(spec, points, s):
    return radial_moments(spec, points, 0.0, s, 2.0)


def compute_L1(spec, x, s):
    """Tail intensity ``int_{|x-w| >= s} J(x, w) dw``."""
    x = check_point(x, spec.dimension)
    s = check_scalar(s, "s", lower=0, include_lower=False)
    v, e = _l1(spec, x[None, :], s)
    return FunctionalValue("L1", tuple(x.tolist()), s, float(v[0]), float(e[0]))


def compute_L2(spec, x, s):
    """Truncated second moment ``int_{|x-w| <= s} |x-w|^2 J(x, w) dw``."""
    x = check_point(x, spec.dimension)
    s = check_scalar(s, "s", lower=0, include_lower=False)
    v, e = _l2(spec, x[None, :], s)
    return FunctionalValue("L2", tuple(x.tolist()), s, float(v[0]), float(e[0]))


def ball_grid(z0, radius, resolution=33):
    """Tensor grid points strictly inside ``B(z0, radius)``, center first."""
    z0 = np.asarray(z0, dtype=float)
    d = z0.size
    ticks = np.linspace(-radius, radius, resolution)
    pts = np.array(list(itertools.product(ticks, repeat=d))) + z0
    inside = np.linalg.norm(pts - z0, axis=1) < radius
    pts = pts[inside]
    pts = pts[np.any(pts != z0, axis=1)]
    return np.vstack([z0[None, :], pts])


def compute_L(spec, z0, r, alpha, *, resolution=33, inner="at-scale", inner_levels=12):
    """``sup L1(x, r) + sup s^d [s^-2 L2(x, s)]^((d+alpha)/alpha)`` over ``B(z0, 3r)``.

    Parameters
    ----------
    resolution : int
        Points per axis of the grid over ``B(z0, 3r)`` (the center is always
        included).
    inner : {"at-scale", "dyadic"}
        Scales of the second supremum: ``s = r`` only, or ``s = r 2^-j`` for
        ``j = 0..inner_levels``.  Under a local lower bound of order ``alpha``
        the second term grows like ``s^-alpha`` as ``s -> 0``, so the dyadic
        maximum is attained at the smallest scale and grows with
        ``inner_levels``.
    """
    d = spec.dimension
    z0 = check_point(z0, d, "z0")
    r = check_scalar(r, "r", lower=0, upper=1, include_lower=False, include_upper=False)
    alpha = check_scalar(alpha, "alpha", lower=0, upper=2, include_lower=False,
                         include_upper=False)
    if inner not in INNER_MODES:
        raise ConfigurationError(f"inner must be one of {INNER_MODES}, got {inner!r}")
    pts = ball_grid(z0, 3 * r, resolution)
    v1, e1 = _l1(spec, pts, r)
    i1 = int(np.argmax(v1))

    scales = [r] if inner == "at-scale" else [r * 2.0 ** -j for j in range(inner_levels + 1)]
    power = (d + alpha) / alpha
    best = (-np.inf, 0.0, None, None)
    for s in scales:
        v2, e2 = _l2(spec, pts, s)
        base = v2 / s**2
        term = s**d * base**power
        j = int(np.argmax(term))
        if term[j] > best[0]:
            err = s**d * power * base[j] ** (power - 1) * e2[j] / s**2
            best = (float(term[j]), float(err), s, pts[j])
    term2, err2, s_best, x_best = best
    value = float(v1[i1]) + term2
    return FunctionalValue(
        "L", tuple(z0.tolist()), r, value, float(e1[i1]) + err2, alpha,
        {"L1_term": float(v1[i1]), "L1_argmax": pts[i1].tolist(), "L2_term": term2,
         "L2_argmax": x_best.tolist(), "L2_scale": s_best, "grid_points": len(pts),
         "inner": inner, "lower_estimate": True})


def L_lower_bound(kappa4, alpha, r, dimension=1):
    """Explicit lower bound ``kappa4 |S^(d-1)| (1 - 2^-alpha) / alpha * r^-alpha``.

    It is the intensity of jumps from ``x`` into the annulus ``r <= |w| < 2r``
    under ``J >= kappa4 |w|^(-d-alpha)``, which the first term of ``L`` dominates.
    """
    return kappa4 * sphere_area(dimension) * (1 - 2.0**-alpha) / alpha * r**-alpha


@dataclass
class ComparabilityReport:
    """Table of ``L(z0, r)`` against ``r^-s(z0)`` and the envelope check."""

    radii: np.ndarray
    L: np.ndarray
    compensated: np.ndarray
    quadrature_error: np.ndarray
    order_at_center: float
    ratio: float
    threshold: float
    envelope_ratio: float = None
    details: list = field(default_factory=list)

    @property
    def passed(self):
        ok = self.ratio <= self.threshold
        if self.envelope_ratio is not None:
            ok = ok and self.envelope_ratio <= 1 + 1e-9
        return bool(ok)

    def rows(self):
        return [(float(r), float(v), float(c), float(e)) for r, v, c, e in
                zip(self.radii, self.L, self.compensated, self.quadrature_error)]


def order_comparability(spec, z0, radii, *, threshold=10.0, alpha=None, resolution=33,
                        inner="at-scale", envelope_samples=(1e-3, 1e-2, 0.1, 0.5, 1.0)):
    """Check that ``L(z0, r) r^s(z0)`` stays bounded over ``radii``.

    ``alpha`` defaults to ``s(z0)``.  For variable-order kernels the report
    also carries the worst ratio of ``sup_{|x-w|=v} J(x, w)`` to
    ``c2 e^c v^(-d-s(x))`` over grid points and ``v`` in ``envelope_samples``.
    """
    d = spec.dimension
    z0 = check_point(z0, d, "z0")
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any((radii <= 0) | (radii >= 1)):
        raise ConfigurationError("radii must be a nonempty list in (0, 1)")
    order = getattr(spec, "order", None)
    if order is None:
        if hasattr(spec, "alpha"):
            s0 = float(spec.alpha)
        else:
            raise ConfigurationError("order_comparability needs a kernel with an order")
    else:
        s0 = float(order(z0))
    a = s0 if alpha is None else alpha
    vals, errs, details = [], [], []
    for r in radii:
        fv = compute_L(spec, z0, r, a, resolution=resolution, inner=inner)
        vals.append(fv.value)
        errs.append(fv.quadrature_error)
        details.append(fv.details)
    vals = np.array(vals)
    comp = vals * radii**s0
    report = ComparabilityReport(radii, vals, comp, np.array(errs), s0,
                                 float(comp.max() / comp.min()), threshold, details=details)
    if isinstance(spec, VariableOrderKernel):
        pts = ball_grid(z0, 3 * radii.max(), 9)
        report.envelope_ratio = order_envelope_ratio(spec, pts, envelope_samples)
    return report


def order_envelope_ratio(spec, points, distances, resolution=64):
    """Worst ``J(x, w) / (c2 e^c |x-w|^(-d-s(x)))`` over spheres ``|x-w| = v``."""
    d = spec.dimension
    dirs, _ = sphere_rule(d, resolution)
    worst = 0.0
    for v in distances:
        v = check_scalar(v, "v", lower=0, upper=1, include_lower=False)
        x = np.repeat(points, dirs.shape[0], axis=0)
        w = x + v * np.tile(dirs, (len(points), 1))
        J = spec(x, w)
        env = spec.c2 * np.exp(spec.order.log_lip) * v ** (-d - spec.order(x))
        worst = max(worst, float(np.max(J / env)))
    return worst


def doubling_exponent(spec, x, r, factors=(1.5, 2.0, 3.0, 4.0)):
    """Fit ``sigma`` in ``L1(x, lambda r) / L1(x, r) ~ lambda^-sigma``.

    Returns ``(sigma, constant)`` where ``constant`` is the smallest ``c``
    with ``L1(x, lambda r) / L1(x, r) <= c lambda^-sigma`` on ``factors``.
    """
    x = check_point(x, spec.dimension)
    lam = np.asarray(factors, dtype=float)
    if np.any(lam <= 1) or np.any(lam >= 1 / r):
        raise ConfigurationError("factors must lie in (1, 1/r)")
    scales = np.concatenate([[r], lam * r])
    vals = np.array([compute_L1(spec, x, s).value for s in scales])
    ratio = vals[1:] / vals[0]
    slope, _ = np.polyfit(np.log(lam), np.log(ratio), 1)
    sigma = -slope
    return float(sigma), float(np.max(ratio * lam**sigma))
