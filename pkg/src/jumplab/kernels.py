"""Symmetric jump kernels ``J(x, y)`` and checks of their intensity bounds.

Four families are provided: the isotropic stable kernel, a variable-order
kernel driven by an :class:`OrderField`, a kernel modulated by a symmetric
factor, and a kernel tabulated on a grid (d = 1).  All of them evaluate
vectorised over broadcastable point arrays of shape ``(..., d)``.
"""

import copy
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import qmc

from ._validation import check_point, check_points, check_scalar
from .exceptions import ConfigurationError, DomainError
from .quadrature import radial_integral, sphere_rule

#: Radius beyond which a modulated kernel's oscillation is averaged out,
#: measured in oscillation periods past the inner limit.
OSCILLATION_PERIODS = 256


@dataclass(frozen=True)
class KernelBounds:
    """Declared constants of the two-sided, tail and local lower bounds."""

    kappa1: float = 1.0
    kappa2: float = 1.0
    beta1: float = 0.5
    beta2: float = 0.5
    kappa3: float = 4.0
    kappa4: float = 1.0
    alpha: float = 0.5
    kappa5: float = 0.0

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "kappa3", "kappa4"):
            check_scalar(getattr(self, name), name, lower=0, include_lower=False,
                         error=ConfigurationError)
        for name in ("beta1", "beta2", "alpha"):
            check_scalar(getattr(self, name), name, lower=0, upper=2,
                         include_lower=False, include_upper=False,
                         error=ConfigurationError)
        check_scalar(self.kappa5, "kappa5", lower=0, error=ConfigurationError)
        if self.beta1 == self.beta2 and self.kappa1 > self.kappa2:
            raise ConfigurationError(
                "kappa1 > kappa2 with beta1 == beta2 leaves an empty band at |x-y| = 1")


class OrderField:
    """A variable stability index ``s: R^d -> (eps, 2 - eps)``.

    ``log_lip`` is the constant ``c`` of the log-modulus
    ``|s(x) - s(y)| <= c / log(2 / |x - y|)`` for ``|x - y| < 1``.
    """

    def __init__(self, func, epsilon, log_lip, description=None):
        self.func = func
        self.epsilon = check_scalar(epsilon, "epsilon", lower=0, upper=1,
                                    include_lower=False, include_upper=False)
        self.log_lip = check_scalar(log_lip, "log_lip", lower=0)
        self.description = description or {"kind": "callable"}

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    @classmethod
    def constant(cls, value):
        value = check_scalar(value, "value", lower=0, upper=2, include_lower=False,
                             include_upper=False)
        eps = min(value, 2 - value) / 2
        return cls(lambda x: np.full(np.shape(x)[:-1], value), eps, 0.0,
                   {"kind": "constant", "value": value})

    @classmethod
    def sinusoidal(cls, mean=0.5, amplitude=0.2, frequency=1.0):
        """``s(x) = mean + amplitude * sin(frequency * x_1)``."""
        lo, hi = mean - abs(amplitude), mean + abs(amplitude)
        if lo <= 0 or hi >= 2:
            raise ConfigurationError(f"order range [{lo}, {hi}] leaves (0, 2)")
        eps = min(lo, 2 - hi) * 0.999
        # sup over 0<d<1 of min(A*w*d, 2A) * log(2/d) bounds the log-modulus
        d = np.geomspace(1e-12, 1.0, 20001)[:-1]
        c = float(np.max(np.minimum(abs(amplitude) * frequency * d, 2 * abs(amplitude))
                         * np.log(2.0 / d)))
        return cls(lambda x: mean + amplitude * np.sin(frequency * x[..., 0]),
                   eps, c * (1 + 1e-9),
                   {"kind": "sinusoidal", "mean": mean, "amplitude": amplitude,
                    "frequency": frequency})

    def check(self, points, seed=0, n_pairs=4000):
        """Sampled check of the range and log-modulus conditions.

        Returns the worst range violation and the worst ratio
        ``|s(x)-s(y)| * log(2/|x-y|) / log_lip`` (> 1 means violation).
        """
        points = np.asarray(points, dtype=float)
        s = self(points)
        range_ok = bool(np.all((s >= self.epsilon) & (s <= 2 - self.epsilon)))
        rng = np.random.default_rng(seed)
        i = rng.integers(0, len(points), n_pairs)
        w = rng.normal(size=(n_pairs, points.shape[1]))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        dist = np.exp(rng.uniform(np.log(1e-8), 0.0, n_pairs)) * (1 - 1e-12)
        x = points[i]
        y = x + dist[:, None] * w
        diff = np.abs(self(x) - self(y))
        lhs = diff * np.log(2.0 / dist)
        ratio = lhs / self.log_lip if self.log_lip > 0 else np.where(lhs > 0, np.inf, 0.0)
        worst = int(np.argmax(ratio))
        return {"range_ok": range_ok, "s_min": float(s.min()), "s_max": float(s.max()),
                "modulus_ratio": float(ratio[worst]),
                "modulus_ok": bool(ratio[worst] <= 1 + 1e-9),
                "witness": (x[worst].tolist(), y[worst].tolist())}


class KernelSpec:
    """Base class of symmetric jump kernels.

    Subclasses implement ``_evaluate(x, y, r)`` for broadcast point arrays and
    their distances.  ``truncation`` zeroes the kernel for ``|x-y| > truncation``.
    """

    family = "abstract"
    translation_invariant = False
    #: angular frequency of any oscillation in the kernel, 0 if none
    oscillation = 0.0
    oscillation_amplitude = 0.0

    def __init__(self, dimension=1, bounds=None, truncation=None):
        if not isinstance(dimension, int) or dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {dimension}")
        self.dimension = dimension
        self.bounds = bounds
        if truncation is not None:
            truncation = check_scalar(truncation, "truncation", lower=0,
                                      include_lower=False, error=ConfigurationError)
        self.truncation = truncation

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self._finish(x, y, np.sqrt(np.sum((x - y) ** 2, axis=-1)))

    def jump(self, x, w):
        """``J(x, x + w)`` with the distance taken from ``w`` itself.

        Near the diagonal this avoids the cancellation in ``|(x + w) - x|``
        when ``|w|`` is far below the rounding error of ``x``.
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return self._finish(x, x + w, np.sqrt(np.sum(w**2, axis=-1)))

    def _finish(self, x, y, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self._evaluate(x, y, r)
        val = np.where(r > 0, val, np.inf)
        support = self.support_radius
        if np.isfinite(support):
            val = np.where(r > support, 0.0, val)
        return val

    def _evaluate(self, x, y, r):
        raise NotImplementedError

    @property
    def support_radius(self):
        return np.inf if self.truncation is None else self.truncation

    def radial_breakpoints(self):
        """Radii where the kernel's radial profile has a kink or jump."""
        return ()

    def far_field(self):
        """Kernel used for radial integrals beyond the oscillation cutoff."""
        return self

    def truncated(self, radius):
        """Copy of this kernel with ``J = 0`` beyond ``radius``."""
        out = copy.copy(self)
        radius = check_scalar(radius, "radius", lower=0, include_lower=False)
        out.truncation = radius if self.truncation is None else min(radius, self.truncation)
        return out

    def describe(self):
        out = {"family": self.family, "dimension": self.dimension}
        if self.truncation is not None:
            out["truncation"] = self.truncation
        return out

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "family")
        return f"{type(self).__name__}({args})"


class StableKernel(KernelSpec):
    """``J(x, y) = kappa |x - y|^(-d - alpha)``."""

    family = "isotropic-stable"
    translation_invariant = True

    def __init__(self, alpha, kappa=1.0, dimension=1, bounds=None, truncation=None):
        super().__init__(dimension, bounds, truncation)
        self.alpha = check_scalar(alpha, "alpha", lower=0, upper=2, include_lower=False,
                                  include_upper=False, error=ConfigurationError)
        self.kappa = check_scalar(kappa, "kappa", lower=0, include_lower=False,
                                  error=ConfigurationError)

    def _evaluate(self, x, y, r):
        return self.kappa * r ** (-self.dimension - self.alpha)

    def profile(self, w):
        """Kernel as a function of the jump vector ``w = y - x``."""
        r = np.sqrt(np.sum(np.asarray(w) ** 2, axis=-1))
        with np.errstate(divide="ignore"):
            val = self.kappa * r ** (-self.dimension - self.alpha)
        if self.truncation is not None:
            val = np.where(r > self.truncation, 0.0, val)
        return val

    def natural_bounds(self):
        """Bounds that hold with equality for this kernel."""
        d = self.dimension
        area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
        tail = self.kappa * area / self.alpha
        return KernelBounds(kappa1=self.kappa, kappa2=self.kappa, beta1=self.alpha,
                            beta2=self.alpha, kappa3=tail, kappa4=self.kappa,
                            alpha=self.alpha)

    def describe(self):
        return {**super().describe(), "alpha": self.alpha, "kappa": self.kappa}


class VariableOrderKernel(KernelSpec):
    """Kernel of locally varying order.

    ``J(x, y) = c |x-y|^(-d - (s(x) + s(y)) / 2)`` for ``|x-y| <= 1`` and
    ``c |x-y|^(-d - far_order)`` beyond, which keeps ``J`` symmetric and
    continuous and gives a finite tail mass.
    """

    family = "variable-order"

    def __init__(self, order, c=1.0, c1=None, c2=None, far_order=1.0, dimension=1,
                 bounds=None, truncation=None):
        super().__init__(dimension, bounds, truncation)
        if not isinstance(order, OrderField):
            raise ConfigurationError("order must be an OrderField")
        self.order = order
        self.c = check_scalar(c, "c", lower=0, include_lower=False, error=ConfigurationError)
        self.c1 = self.c if c1 is None else float(c1)
        self.c2 = self.c if c2 is None else float(c2)
        if not self.c1 <= self.c <= self.c2:
            raise ConfigurationError("need c1 <= c <= c2")
        self.far_order = check_scalar(far_order, "far_order", lower=0, upper=2,
                                      include_lower=False, include_upper=False,
                                      error=ConfigurationError)

    def _evaluate(self, x, y, r):
        x, y = np.broadcast_arrays(x, y)
        mean = 0.5 * (self.order(x) + self.order(y))
        near = self.c * r ** (-self.dimension - mean)
        far = self.c * r ** (-self.dimension - self.far_order)
        return np.where(r <= 1.0, near, far)

    def radial_breakpoints(self):
        return (1.0,)

    def describe(self):
        return {**super().describe(), "order": self.order.description, "c": self.c,
                "c1": self.c1, "c2": self.c2, "far_order": self.far_order,
                "log_lip": self.order.log_lip}


class OscillatoryModulation:
    """Symmetric factor ``1 + a sin(omega (x_1 + y_1))`` with ``|a| < 1``."""

    def __init__(self, amplitude, frequency):
        self.amplitude = check_scalar(amplitude, "amplitude", lower=-1, upper=1,
                                      include_lower=False, include_upper=False,
                                      error=ConfigurationError)
        self.frequency = check_scalar(frequency, "frequency", lower=0,
                                      error=ConfigurationError)

    def __call__(self, x, y):
        return 1.0 + self.amplitude * np.sin(self.frequency * (x[..., 0] + y[..., 0]))

    @property
    def lower(self):
        return 1.0 - abs(self.amplitude)

    @property
    def upper(self):
        return 1.0 + abs(self.amplitude)

    mean = 1.0

    def describe(self):
        return {"kind": "oscillatory", "amplitude": self.amplitude,
                "frequency": self.frequency}


class ModulatedKernel(KernelSpec):
    """``J(x, y) = J_base(x, y) * m(x, y)`` for a symmetric factor ``m``.

    ``modulation`` needs ``__call__(x, y)``, ``lower``/``upper`` bounds on the
    factor, its local ``mean`` and (optionally) an angular ``frequency``.
    """

    family = "modulated"

    def __init__(self, base, modulation, bounds=None, truncation=None):
        super().__init__(base.dimension, bounds, truncation)
        self.base = base
        self.modulation = modulation
        freq = float(getattr(modulation, "frequency", 0.0))
        self.oscillation = freq
        self.oscillation_amplitude = (modulation.upper - modulation.lower) / 2 if freq else 0.0

    def _evaluate(self, x, y, r):
        return self.base._evaluate(x, y, r) * self.modulation(x, y)

    @property
    def support_radius(self):
        return min(super().support_radius, self.base.support_radius)

    def radial_breakpoints(self):
        return self.base.radial_breakpoints()

    def far_field(self):
        base = self.base.far_field()
        if self.modulation.mean == 1.0:
            out = copy.copy(base)
        else:
            out = ModulatedKernel(base, _ConstantFactor(self.modulation.mean))
        if self.truncation is not None:
            out = out.truncated(self.truncation)
        return out

    def describe(self):
        mod = self.modulation.describe() if hasattr(self.modulation, "describe") else {}
        return {**super().describe(), "base": self.base.describe(), "modulation": mod}


class _ConstantFactor:
    frequency = 0.0

    def __init__(self, value):
        self.lower = self.upper = self.mean = value

    def __call__(self, x, y):
        return self.mean

    def describe(self):
        return {"kind": "constant", "value": self.mean}


class TabulatedKernel(KernelSpec):
    """Kernel tabulated on a tensor grid in d = 1, bilinearly interpolated.

    The table is symmetrised on load, ``(J(x,y) + J(y,x)) / 2``; the kernel
    vanishes outside the grid.
    """

    family = "tabulated"

    def __init__(self, grid, values, bounds=None, truncation=None):
        super().__init__(1, bounds, truncation)
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or values.shape != (grid.size, grid.size):
            raise ConfigurationError("tabulated kernel needs a square table on a 1-D grid")
        if np.any(np.diff(grid) <= 0):
            raise ConfigurationError("grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigurationError("tabulated values must be finite and nonnegative")
        self.grid = grid
        self.values = 0.5 * (values + values.T)
        self._interp = RegularGridInterpolator((grid, grid), self.values,
                                               bounds_error=False, fill_value=0.0)

    @classmethod
    def from_csv(cls, path, **kwargs):
        """Load ``(x, y, value)`` triples (one header line) covering a full grid."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [tuple(float(v) for v in row) for row in reader if row]
        data = np.array(rows)
        grid = np.unique(np.concatenate([data[:, 0], data[:, 1]]))
        pos = {v: i for i, v in enumerate(grid)}
        table = np.full((grid.size, grid.size), np.nan)
        for x, y, v in rows:
            table[pos[x], pos[y]] = v
        if np.any(np.isnan(table)):
            raise ConfigurationError(f"{path}: table does not cover the full grid")
        return cls(grid, table, **kwargs)

    def _evaluate(self, x, y, r):
        x, y = np.broadcast_arrays(x[..., 0], y[..., 0])
        pts = np.stack([x.ravel(), y.ravel()], axis=-1)
        return self._interp(pts).reshape(x.shape)

    def describe(self):
        return {**super().describe(), "grid_points": int(self.grid.size),
                "extent": [float(self.grid[0]), float(self.grid[-1])]}


def eval_kernel(spec, x, y):
    """Evaluate ``J(x, y)`` for off-diagonal, finite points.

    Raises
    ------
    DomainError
        On a diagonal pair or non-finite coordinates.
    """
    x = check_points(x, spec.dimension, "x")
    y = check_points(y, spec.dimension, "y")
    if np.any(np.all(np.broadcast_arrays(x, y)[0] == np.broadcast_arrays(x, y)[1], axis=-1)):
        raise DomainError("J is an off-diagonal intensity; got x == y")
    val = spec(x, y)
    return float(val) if np.ndim(val) == 0 else val


# --------------------------------------------------------------------------
# radial moments

def directional_moment(spec, centers, directions, lo, hi, power=0.0, *,
                       rtol=1e-12, order=20):
    """``int_lo^hi rho^(d-1+power) J(x, x + rho theta) d rho`` per element.

    ``centers`` and ``directions`` have shape ``(n, d)``; ``lo``/``hi`` are
    broadcast to ``(n,)``.  Returns ``(value, error)``.
    """
    centers = np.asarray(centers, dtype=float)
    directions = np.asarray(directions, dtype=float)
    n = centers.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    hi = np.minimum(hi, spec.support_radius)
    d = spec.dimension
    expo = d - 1 + power

    def density_for(kernel):
        def density(rho, idx):
            x = centers[idx][:, None, :]
            w = rho[..., None] * directions[idx][:, None, :]
            return rho ** expo * kernel.jump(x, w)
        return density

    breaks = sorted(b for b in spec.radial_breakpoints() if np.isfinite(b))
    edges = [0.0, *breaks, np.inf]
    value = np.zeros(n)
    error = np.zeros(n)
    panel = None
    if spec.oscillation > 0:
        panel = np.pi / (2.0 * spec.oscillation)
        cutoff = lo + OSCILLATION_PERIODS * 2.0 * np.pi / spec.oscillation
    else:
        cutoff = np.full(n, np.inf)
    for a, b in zip(edges[:-1], edges[1:]):
        seg_lo = np.maximum(lo, a)
        seg_hi = np.minimum(hi, b)
        near_hi = np.minimum(seg_hi, cutoff)
        v, e = radial_integral(density_for(spec), seg_lo, near_hi, order=order,
                               rtol=rtol, panel_width=panel)
        value += v
        error += e
        if spec.oscillation > 0:
            far_lo = np.maximum(seg_lo, cutoff)
            far = spec.far_field()
            v, e = radial_integral(density_for(far), far_lo, seg_hi, order=order, rtol=rtol)
            value += v
            error += e
            # second mean value theorem bound on the averaged-out oscillation
            has_far = far_lo < seg_hi
            if np.any(has_far):
                at = np.where(has_far, far_lo, 1.0)
                dens = density_for(far)(at[:, None], np.arange(n))[:, 0]
                # the phase advances at rate omega * |theta_1| along the ray
                rate = spec.oscillation * np.maximum(np.abs(directions[:, 0]), 1e-3)
                error += np.where(has_far, 2.0 * spec.oscillation_amplitude * dens / rate, 0.0)
    return value, error


def radial_moments(spec, centers, lo, hi, power=0.0, *, axis=None, resolution=64,
                   rtol=1e-12):
    """Integrate ``|w|^power J(x, x + w)`` over ``lo < |w| < hi`` per center.

    With ``axis`` set, the angular weight ``theta_axis^2`` is applied, giving
    per-axis second moments when ``power = 0`` and the caller adds ``2``.
    Returns ``(value, error)`` arrays of shape ``(n,)``.
    """
    centers = check_points(centers, spec.dimension, "centers").reshape(-1, spec.dimension)
    dirs, w = sphere_rule(spec.dimension, resolution)
    if axis is not None:
        w = w * dirs[:, axis] ** 2
    n, k = centers.shape[0], dirs.shape[0]
    rep_c = np.repeat(centers, k, axis=0)
    rep_d = np.tile(dirs, (n, 1))
    lo = np.repeat(np.broadcast_to(np.asarray(lo, dtype=float), (n,)), k)
    hi = np.repeat(np.broadcast_to(np.asarray(hi, dtype=float), (n,)), k)
    v, e = directional_moment(spec, rep_c, rep_d, lo, hi, power, rtol=rtol)
    weights = np.tile(w, n)
    return (v * weights).reshape(n, k).sum(axis=1), (e * weights).reshape(n, k).sum(axis=1)


def tail_mass(spec, x, R, *, rtol=1e-12):
    """``int_{|x - y| > R} J(x, y) dy`` by dyadic radial quadrature."""
    x = check_point(x, spec.dimension)
    R = check_scalar(R, "R", lower=0, include_lower=False)
    v, _ = radial_moments(spec, x[None, :], R, np.inf, 0.0, rtol=rtol)
    return float(v[0])


def tail_masses(spec, centers, R, *, rtol=1e-12):
    """Vectorised :func:`tail_mass`; returns ``(values, errors)``."""
    return radial_moments(spec, centers, R, np.inf, 0.0, rtol=rtol)


def outside_box_mass(spec, centers, lo, hi, *, resolution=64, rtol=1e-10):
    """``int_{y outside [lo, hi]} J(x, y) dy`` for centers inside the box."""
    d = spec.dimension
    centers = np.asarray(centers, dtype=float).reshape(-1, d)
    dirs, w = sphere_rule(d, resolution)
    n, k = centers.shape[0], dirs.shape[0]
    rep_c = np.repeat(centers, k, axis=0)
    rep_d = np.tile(dirs, (n, 1))
    with np.errstate(divide="ignore"):
        t_hi = np.where(rep_d > 0, (hi - rep_c) / np.where(rep_d > 0, rep_d, 1), np.inf)
        t_lo = np.where(rep_d < 0, (lo - rep_c) / np.where(rep_d < 0, rep_d, 1), np.inf)
    exit_r = np.min(np.minimum(t_hi, t_lo), axis=1)
    v, _ = directional_moment(spec, rep_c, rep_d, exit_r, np.inf, 0.0, rtol=rtol)
    return (v * np.tile(w, n)).reshape(n, k).sum(axis=1)


# --------------------------------------------------------------------------
# bound verification

@dataclass
class SamplingPlan:
    """How ``verify_bounds`` samples points, pairs and radii.

    Points come from an unscrambled Sobol sequence on ``region`` (deterministic)
    plus ``n_random_pairs`` pairs from a seeded generator.
    """

    region: tuple = (-1.0, 1.0)
    n_points: int = 64
    n_random_pairs: int = 2000
    n_tail_points: int = 16
    seed: int = 0
    center: object = None
    radius: float = None
    check_defect: bool = False
    defect_levels: int = 8


@dataclass
class ConditionResult:
    name: str
    passed: bool
    violation_ratio: float
    witness: object = None
    witness_value: float = None
    note: str = ""


@dataclass
class BoundsReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self):
        return [r.name for r in self.results]


RATIO_TOL = 1e-9


def _sobol(n, d, lo, hi):
    pts = qmc.Sobol(d, scramble=False).random(max(n, 2))[:n]
    return lo + (hi - lo) * pts


def _pair_sample(plan, d, lo, hi, max_dist, rng, n_dist=24):
    """Pairs (x, y) with ``|x - y|`` log-spread over ``[1e-4, 1] * max_dist``."""
    x = _sobol(plan.n_points, d, lo, hi)
    dirs, _ = sphere_rule(d, 8)
    dist = np.geomspace(1e-4, 1.0, n_dist) * max_dist
    xs = np.repeat(x, dirs.shape[0] * dist.size, axis=0)
    ws = np.tile((dirs[:, None, :] * dist[None, :, None]).reshape(-1, d), (x.shape[0], 1))
    m = plan.n_random_pairs
    xr = lo + (hi - lo) * rng.random((m, d))
    wr = rng.normal(size=(m, d))
    wr /= np.linalg.norm(wr, axis=1, keepdims=True)
    wr *= (max_dist * np.exp(rng.uniform(np.log(1e-4), 0.0, m)))[:, None]
    return np.vstack([xs, xr]), np.vstack([xs + ws, xr + wr])


def _worst(ratio, x, y):
    i = int(np.argmax(ratio))
    return float(ratio[i]), (x[i].tolist(), y[i].tolist())


def verify_bounds(spec, plan=None, bounds=None):
    """Sampled certificate of the declared kernel bounds.

    Checks the two-sided band for ``|x-y| <= 1``, the tail bound
    ``tail_mass(x, 1) <= kappa3``, the local lower bound on ``B(z0, 3r)`` when
    the plan has a center, and optionally the defect-kernel integral bound.
    """
    plan = plan or SamplingPlan()
    bounds = bounds or spec.bounds
    if bounds is None:
        raise ConfigurationError("verify_bounds needs declared KernelBounds")
    d = spec.dimension
    rng = np.random.default_rng(plan.seed)
    lo, hi = np.broadcast_to(np.asarray(plan.region[0], float), (d,)), \
        np.broadcast_to(np.asarray(plan.region[1], float), (d,))
    report = BoundsReport()

    # two-sided band
    x, y = _pair_sample(plan, d, lo, hi, 1.0, rng)
    r = np.linalg.norm(x - y, axis=1)
    J = spec(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        low = bounds.kappa1 * r ** (-d - bounds.beta1) / J
        up = J / (bounds.kappa2 * r ** (-d - bounds.beta2))
    ratio = np.nan_to_num(np.maximum(low, up), nan=np.inf, posinf=np.inf)
    worst, wit = _worst(ratio, x, y)
    report.results.append(ConditionResult("two-sided", worst <= 1 + RATIO_TOL, worst, wit,
                                          float(J[int(np.argmax(ratio))])))

    # tail mass
    tx = _sobol(plan.n_tail_points, d, lo, hi)
    tails, _ = tail_masses(spec, tx, 1.0)
    i = int(np.argmax(tails))
    worst = float(tails[i] / bounds.kappa3)
    report.results.append(ConditionResult("tail", worst <= 1 + RATIO_TOL, worst,
                                          tx[i].tolist(), float(tails[i])))

    # order band / log-modulus for variable-order kernels
    if isinstance(spec, VariableOrderKernel):
        sx, sy = spec.order(x), spec.order(y)
        near = r <= 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            lowv = spec.c1 * r ** (-d - np.minimum(sx, sy)) / J
            upv = J / (spec.c2 * r ** (-d - np.maximum(sx, sy)))
        ratio = np.where(near, np.maximum(lowv, upv), 0.0)
        worst, wit = _worst(ratio, x, y)
        report.results.append(ConditionResult("order-band", worst <= 1 + RATIO_TOL, worst, wit))
        mod = spec.order.check(_sobol(plan.n_points, d, lo, hi), seed=plan.seed)
        report.results.append(ConditionResult(
            "order-modulus", mod["modulus_ok"] and mod["range_ok"], mod["modulus_ratio"],
            mod["witness"],
            note="log-modulus checked as c/log(2/|x-y|), the form the comparability "
                 "derivation uses"))

    if plan.center is not None:
        z0 = check_point(plan.center, d, "center")
        rad = check_scalar(plan.radius, "radius", lower=0, include_lower=False)
        xb, yb = _ball_pairs(z0, 3 * rad, plan, rng)
        rb = np.linalg.norm(xb - yb, axis=1)
        Jb = spec(xb, yb)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = bounds.kappa4 * rb ** (-d - bounds.alpha) / Jb
        ratio = np.nan_to_num(ratio, nan=np.inf)
        worst, wit = _worst(ratio, xb, yb)
        report.results.append(ConditionResult("local-lower", worst <= 1 + RATIO_TOL, worst, wit))
        if plan.check_defect:
            report.results.append(_defect_check(spec, bounds, z0, rad, plan))
    return report


def _ball_pairs(z0, radius, plan, rng):
    d = z0.size
    m = plan.n_points * 32 + plan.n_random_pairs
    u = rng.normal(size=(2 * m, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = z0 + radius * u * (rng.random((2 * m, 1)) ** (1.0 / d)) * (1 - 1e-12)
    x, y = pts[:m], pts[m:]
    keep = np.linalg.norm(x - y, axis=1) > 0
    return x[keep], y[keep]


def _defect_check(spec, bounds, z0, radius, plan):
    """Sampled check of ``int_{|w|<=delta} K <= kappa5 delta^-alpha``."""
    d = spec.dimension
    alpha = bounds.alpha
    dirs, w = sphere_rule(d, 64)
    xs = z0 + 3 * radius * _sobol(min(plan.n_points, 16), d, -1.0, 1.0) / np.sqrt(d) * (1 - 1e-9)
    deltas = radius * 2.0 ** -np.arange(plan.defect_levels + 1)
    worst, witness, wval = 0.0, None, 0.0
    for x in xs:
        def density(rho, idx):
            J = spec.jump(x, rho[..., None] * dirs[idx][:, None, :])
            K = np.maximum(bounds.kappa4 * rho ** (-d - alpha) - J, 0.0)
            return rho ** (d - 1) * K
        for delta in deltas:
            vals, _ = radial_integral(density, np.zeros(dirs.shape[0]), delta,
                                      rtol=1e-10, extrapolate=True)
            integral = float(vals @ w)
            limit = bounds.kappa5 * delta ** (-alpha)
            ratio = integral / limit if limit > 0 else (np.inf if integral > 0 else 0.0)
            if ratio > worst or witness is None:
                worst, witness, wval = ratio, (x.tolist(), float(delta)), integral
    return ConditionResult("defect", worst <= 1 + RATIO_TOL, worst, witness, wval)
