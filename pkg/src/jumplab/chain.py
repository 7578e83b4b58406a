"""Lattice Markov-chain approximation of a jump kernel.

Sites are the points of ``n^-1 Z^d`` in a box.  The conductance between two
sites is the average of ``J`` over the product of their cells (cubes of side
``h = 1/n``), the rate from ``x`` to ``y`` is ``q(x, y) = 2 C(x, y) n^-d`` and
the generator satisfies ``E_n(f, g) = <-A f, g>`` in ``L^2(nu)`` with
``nu = n^-d`` per site.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._validation import check_box, check_int, check_site_function
from .exceptions import (CapabilityError, ConfigurationError, DivergentEntryError,
                         QuadratureError)
from .kernels import (ModulatedKernel, OscillatoryModulation, outside_box_mass,
                      radial_moments)
from .quadrature import gauss_legendre, radial_integral

POLICIES = ("literal", "moment-matched")
MODES = ("killed", "conservative")
MAX_DENSE_SITES = 16384
ANGULAR_ORDER = 24


@dataclass
class Lattice:
    """Points of ``n^-1 Z^d`` inside ``box``, indexed row-major (last axis fastest)."""

    dimension: int
    n: int
    box: tuple
    ticks: list

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def nu(self):
        return float(self.n) ** -self.dimension

    @property
    def shape(self):
        return tuple(len(t) for t in self.ticks)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def int_points(self):
        grids = np.meshgrid(*self.ticks, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def points(self):
        return self.int_points / self.n

    @property
    def cell_box(self):
        """Bounds of the union of all site cells."""
        lo = np.array([t[0] for t in self.ticks]) / self.n - 0.5 / self.n
        hi = np.array([t[-1] for t in self.ticks]) / self.n + 0.5 / self.n
        return lo, hi

    def index(self, point):
        """Index of the site nearest to ``point``; error if it lies off the lattice box."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        k = np.rint(p * self.n).astype(int)
        idx = 0
        for axis, t in enumerate(self.ticks):
            pos = k[axis] - t[0]
            if not 0 <= pos < len(t):
                raise ConfigurationError(f"point {point} lies outside the lattice box")
            idx = idx * len(t) + pos
        return int(idx)

    def ball(self, center, radius):
        """Mask of sites with ``|x - center| <= radius`` (closed ball)."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        dist = np.linalg.norm(self.points - c, axis=1)
        return dist <= radius * (1 + 1e-12)

    def describe(self):
        return {"dimension": self.dimension, "n": self.n,
                "box": [list(map(float, b)) for b in self.box], "sites": self.size}


def build_lattice(dimension, n, box):
    """All points of ``n^-1 Z^d`` inside ``box``.

    Raises
    ------
    ConfigurationError
        If ``n < 2`` or a box side holds fewer than two lattice points.
    """
    dimension = check_int(dimension, "dimension", lower=1)
    n = check_int(n, "n", lower=2)
    lo, hi = check_box(box, dimension)
    ticks = []
    for a, b in zip(lo, hi):
        k0 = math.ceil(a * n - 1e-9)
        k1 = math.floor(b * n + 1e-9)
        if k1 - k0 < 1:
            raise ConfigurationError(
                f"box side [{a}, {b}] holds fewer than two points of the 1/{n} lattice")
        ticks.append(np.arange(k0, k1 + 1))
    lat = Lattice(dimension, n, (tuple(lo), tuple(hi)), ticks)
    if lat.size > MAX_DENSE_SITES:
        raise CapabilityError(f"{lat.size} sites exceeds the dense limit {MAX_DENSE_SITES}")
    return lat


class SiteSet:
    """Arbitrary finite state space with points and a uniform site mass ``nu``."""

    def __init__(self, points, nu=1.0):
        pts = np.asarray(points, dtype=float)
        self.points = pts.reshape(len(pts), -1)
        self.dimension = self.points.shape[1]
        self.nu = float(nu)
        self.size = len(self.points)
        self.n = None
        self.box = (tuple(self.points.min(axis=0)), tuple(self.points.max(axis=0)))

    def index(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        hit = np.flatnonzero(np.all(np.isclose(self.points, p, rtol=0, atol=1e-12), axis=1))
        if hit.size != 1:
            raise ConfigurationError(f"{point} is not a site")
        return int(hit[0])

    def ball(self, center, radius):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return np.linalg.norm(self.points - c, axis=1) <= radius * (1 + 1e-12)

    def describe(self):
        return {"dimension": self.dimension, "sites": self.size, "nu": self.nu}


@dataclass
class ConductanceMatrix:
    """Symmetric cell-averaged conductances with zero diagonal."""

    lattice: Lattice
    entries: np.ndarray
    policy: str
    spec: object = None
    info: dict = field(default_factory=dict)

    def to_sparse(self):
        return sparse.csr_array(self.entries)


@dataclass
class GeneratorMatrix:
    """Rate matrix ``A`` with ``A(x, y) = 2 C(x, y) n^-d`` off the diagonal."""

    lattice: Lattice
    rates: np.ndarray
    kill: np.ndarray
    mode: str
    policy: str
    conductances: ConductanceMatrix = None

    @property
    def size(self):
        return self.rates.shape[0]

    @property
    def diagonal(self):
        return np.diag(self.rates)

    def matvec(self, f):
        return self.rates @ f

    def to_sparse(self):
        return sparse.csr_array(self.rates)


# --------------------------------------------------------------------------
# conductances

# Offset weights are written in u = 1 - |t|, which stays exact near |t| = 1.

def _tent(u):
    return u


def _sine_tent(omega, n):
    # tent times E[cos(omega sigma / n)] over the cell pairs at fixed offset t
    if omega == 0:
        return _tent
    return lambda u: np.sin(omega * u / n) * n / omega


def _offset_integrals(profile, offsets, n, weights, order):
    """``int_[-1,1]^d profile((k + t) / n) prod_i w_i(1 - |t_i|) dt`` for each offset ``k``.

    The integrand is singular only where ``k + t = 0``, which for touching
    offsets is a corner of one orthant sub-box; those are integrated in polar
    coordinates around the corner with a geometric tail towards it.
    """
    offsets = np.asarray(offsets, dtype=int)
    m, d = offsets.shape
    value = np.zeros(m)
    patterns = np.array(np.meshgrid(*[[-1, 1]] * d, indexing="ij")).reshape(d, -1).T
    near = np.max(np.abs(offsets), axis=1) <= 3
    for sign in patterns:
        # sub-box t_i in [0, 1] (sign +1) or [-1, 0] (sign -1)
        singular = np.all((offsets == 0) | (offsets == -sign), axis=1)
        for mask, q in ((~singular & near, 2 * order), (~singular & ~near, order)):
            idx = np.flatnonzero(mask)
            if idx.size:
                value[idx] += _tensor_box(profile, offsets[idx], sign, n, weights, q)
        idx = np.flatnonzero(singular & np.any(offsets != 0, axis=1))
        if idx.size:
            value[idx] += _corner_box(profile, offsets[idx], sign, n, weights)
    return value


def _tensor_box(profile, offsets, sign, n, weights, q):
    d = offsets.shape[1]
    x, w = gauss_legendre(q)
    axes_t = [sign[i] * x for i in range(d)]
    grids = np.meshgrid(*axes_t, indexing="ij")
    t = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.ones(t.shape[0])
    wgrid = np.meshgrid(*[w] * d, indexing="ij")
    for i in range(d):
        wt = wt * wgrid[i].ravel() * weights[i](1.0 - np.abs(t[:, i]))
    out = np.empty(offsets.shape[0])
    chunk = max(1, 2_000_000 // t.shape[0])
    for s in range(0, offsets.shape[0], chunk):
        k = offsets[s:s + chunk]
        pts = (k[:, None, :] + t[None, :, :]) / n
        out[s:s + chunk] = profile(pts) @ wt
    return out


def _corner_box(profile, offsets, sign, n, weights):
    """Orthant sub-box of ``s = k + t`` with the singularity at its corner ``s = 0``."""
    m, d = offsets.shape
    # the sub-box extends from the singular corner along +-1 per axis
    e = np.where(offsets == 0, sign, offsets).astype(float)
    if d == 1:
        dirs = e
        wdir = np.ones(m)
        rmax = np.ones(m)
        elem = np.arange(m)
    elif d == 2:
        x, w = gauss_legendre(ANGULAR_ORDER)
        th = np.concatenate([x * np.pi / 4, np.pi / 4 + x * np.pi / 4])
        wth = np.concatenate([w, w]) * np.pi / 4
        rm = np.where(th <= np.pi / 4, 1.0 / np.cos(th), 1.0 / np.sin(th))
        unit = np.stack([np.cos(th), np.sin(th)], axis=1)
        dirs = (e[:, None, :] * unit[None, :, :]).reshape(-1, 2)
        wdir = np.tile(wth, m)
        rmax = np.tile(rm, m)
        elem = np.repeat(np.arange(m), th.size)
    else:
        raise CapabilityError("touching cell pairs are integrated for d <= 2")
    koff = offsets[elem].astype(float)

    def density(rho, idx):
        s = rho[..., None] * dirs[idx][:, None, :]
        wt = np.ones(rho.shape)
        for i in range(d):
            a = np.abs(s[..., i])
            # touching axis: |t| = 1 - |s|; aligned axis: |t| = |s|
            u = np.where(koff[idx][:, None, i] != 0, a, 1.0 - a)
            wt = wt * weights[i](u)
        return rho ** (d - 1) * profile(s / n) * wt

    try:
        vals, _ = radial_integral(density, np.zeros(dirs.shape[0]), rmax, rtol=1e-13)
    except QuadratureError as exc:
        pair = tuple(int(v) for v in offsets[0])
        raise DivergentEntryError(
            f"cell-average conductance for touching offset {pair} diverges; the local "
            "order is >= 1 on a shared face, use policy='moment-matched'", pair,
            exc.partial_value) from None
    return np.bincount(elem, weights=vals * wdir, minlength=m)


def _ti_profile(spec):
    """Jump-vector profile of a translation-invariant kernel, or ``None``."""
    if spec.translation_invariant and hasattr(spec, "profile"):
        prof = spec.profile
        if spec.truncation is not None:
            T = spec.truncation
            return lambda w: np.where(np.sqrt(np.sum(w**2, axis=-1)) > T, 0.0, prof(w))
        return prof
    return None


def _all_offsets(lattice):
    spans = [np.arange(-(len(t) - 1), len(t)) for t in lattice.ticks]
    grids = np.meshgrid(*spans, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _offset_table(lattice, values_by_offset, offsets):
    """Dense ``M[i, j] = values[k(j) - k(i)]`` from per-offset values."""
    k = lattice.int_points
    shape = [2 * len(t) - 1 for t in lattice.ticks]
    table = np.zeros(shape)
    table[tuple((offsets + (np.array(shape) - 1) // 2).T)] = values_by_offset
    N = lattice.size
    out = np.empty((N, N))
    half = (np.array(shape) - 1) // 2
    for i in range(N):
        rel = k - k[i] + half
        out[i] = table[tuple(rel.T)]
    return out


def build_conductances(spec, lattice, quad_order=8, policy="literal"):
    """Cell-pair averages ``C(x, y) = n^2d int_cell(x) int_cell(y) J``.

    Parameters
    ----------
    quad_order : int
        Gauss-Legendre nodes per axis (and per half-cell) for separated pairs;
        pairs within three cells use twice as many.
    policy : {"literal", "moment-matched"}
        ``literal`` integrates touching pairs exactly (finite while the local
        order is below 1); ``moment-matched`` sets face-adjacent conductances so
        the chain's per-axis second-moment rate ``4 C h^2 n^-d`` equals
        ``2 int_{|w| <= h/2} w_a^2 J(x, x + w) dw``, averaged over both ends.

    Raises
    ------
    DivergentEntryError
        A touching pair is infinite under the literal policy.
    """
    quad_order = check_int(quad_order, "quad_order", lower=1)
    if policy not in POLICIES:
        raise ConfigurationError(f"policy must be one of {POLICIES}, got {policy!r}")
    if spec.dimension != lattice.dimension:
        raise ConfigurationError("kernel and lattice dimensions differ")
    d, n = lattice.dimension, lattice.n
    offsets = _all_offsets(lattice)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    face = np.sum(np.abs(offsets), axis=1) == 1
    use = ~face if policy == "moment-matched" else np.ones(len(offsets), dtype=bool)
    tents = [_tent] * d

    profile = _ti_profile(spec)
    fast_mod = (isinstance(spec, ModulatedKernel)
                and isinstance(spec.modulation, OscillatoryModulation)
                and _ti_profile(spec.base) is not None and spec.truncation is None)
    if profile is not None:
        vals = np.zeros(len(offsets))
        vals[use] = _offset_integrals(profile, offsets[use], n, tents, quad_order)
        C = _offset_table(lattice, vals, offsets)
        route = "offset"
    elif fast_mod:
        base = _ti_profile(spec.base)
        mod = spec.modulation
        w_mod = [_sine_tent(mod.frequency, n)] + [_tent] * (d - 1)
        vals = np.zeros(len(offsets))
        osc = np.zeros(len(offsets))
        vals[use] = _offset_integrals(base, offsets[use], n, tents, quad_order)
        osc[use] = _offset_integrals(base, offsets[use], n, w_mod, quad_order)
        pts = lattice.points
        phase = np.sin(mod.frequency * (pts[:, 0][:, None] + pts[:, 0][None, :]))
        C = _offset_table(lattice, vals, offsets) \
            + mod.amplitude * phase * _offset_table(lattice, osc, offsets)
        route = "offset-modulated"
    else:
        if d != 1:
            raise CapabilityError(
                "conductances of non-translation-invariant kernels are built for d = 1")
        C = _pairwise_1d(spec, lattice, quad_order, skip_touching=policy == "moment-matched")
        route = "pairwise"
    np.fill_diagonal(C, 0.0)
    if policy == "moment-matched":
        _apply_moment_matching(spec, lattice, C)
    C = 0.5 * (C + C.T)
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise QuadratureError("conductances must be finite and nonnegative")
    return ConductanceMatrix(lattice, C, policy, spec,
                             {"route": route, "quad_order": quad_order})


def _apply_moment_matching(spec, lattice, C):
    d, n, h = lattice.dimension, lattice.n, lattice.h
    pts = lattice.points
    k = lattice.int_points
    for axis in range(d):
        m2, _ = radial_moments(spec, pts, 0.0, h / 2, 2.0, axis=axis)
        value_at = m2 / (2.0 * h**2 * n**-d)
        step = np.zeros(d, dtype=int)
        step[axis] = 1
        # neighbours along this axis
        lookup = {tuple(v): i for i, v in enumerate(k)}
        for i, ki in enumerate(k):
            j = lookup.get(tuple(ki + step))
            if j is not None:
                C[i, j] = C[j, i] = 0.5 * (value_at[i] + value_at[j])


def _pairwise_1d(spec, lattice, quad_order, skip_touching=False):
    x = lattice.points[:, 0]
    N, h = x.size, lattice.h
    C = np.zeros((N, N))
    for gap, q in ((slice(2, 4), 2 * quad_order), (slice(4, None), quad_order)):
        t, w = gauss_legendre(q)
        u = t - 0.5
        U, V = np.meshgrid(u, u, indexing="ij")
        W = np.outer(w, w).ravel()
        U, V = U.ravel(), V.ravel()
        lo = gap.start
        hi = N if gap.stop is None else gap.stop
        for g in range(lo, min(hi, N)):
            i = np.arange(N - g)
            xi = x[i][:, None] + U[None, :] * h
            yj = x[i + g][:, None] + V[None, :] * h
            vals = spec(xi[..., None], yj[..., None]) @ W
            C[i, i + g] = vals
    if not skip_touching:
        i = np.arange(N - 1)
        C[i, i + 1] = _touching_1d(spec, x[i], h)
    return C + C.T


def _touching_1d(spec, xi, h):
    """Average of ``J`` over cells ``[x - h/2, x + h/2] x [x + h/2, x + 3h/2]``.

    Polar coordinates ``(a, b) = rho (cos th, sin th)`` around the shared
    corner, with ``a`` the distance below and ``b`` above the shared face.
    """
    m = xi.size
    x, w = gauss_legendre(ANGULAR_ORDER)
    th = np.concatenate([x * np.pi / 4, np.pi / 4 + x * np.pi / 4])
    wth = np.concatenate([w, w]) * np.pi / 4
    rm = np.where(th <= np.pi / 4, 1.0 / np.cos(th), 1.0 / np.sin(th))
    k = th.size
    face = np.repeat(xi + h / 2, k)
    ct = np.tile(np.cos(th), m)
    st = np.tile(np.sin(th), m)

    def density(rho, idx):
        a = rho * ct[idx][:, None]
        b = rho * st[idx][:, None]
        xi_ = (face[idx][:, None] - a * h)[..., None]
        return rho * spec.jump(xi_, ((a + b) * h)[..., None])

    try:
        vals, _ = radial_integral(density, np.zeros(m * k), np.tile(rm, m), rtol=1e-13)
    except QuadratureError as exc:
        raise DivergentEntryError(
            "cell-average conductance between touching cells diverges; the local order "
            "is >= 1, use policy='moment-matched'", (0, 1), exc.partial_value) from None
    return np.bincount(np.repeat(np.arange(m), k), weights=vals * np.tile(wth, m),
                       minlength=m)


# --------------------------------------------------------------------------
# generator

def _quantize(rates, kill):
    """Round rates to a common power-of-two grid so row sums are exact."""
    total = np.max(rates.sum(axis=1) + kill) if rates.size else 0.0
    if total <= 0:
        return rates, kill
    e = math.ceil(math.log2(total)) + 1 - 52
    unit = 2.0**e
    return np.round(rates / unit) * unit, np.round(kill / unit) * unit


def assemble_generator(C, mode="conservative", spec=None):
    """Generator with rates ``2 C n^-d`` and the chosen boundary treatment.

    ``killed`` adds a death rate ``2 int_{y outside the cell union} J(x, y) dy``
    per site (from ``spec``, defaulting to the kernel ``C`` was built from);
    ``conservative`` discards jumps leaving the box so every row sums to 0.
    Off-diagonal rates are rounded to a power-of-two grid about 2^-52 times the
    largest total rate, which makes the row sums exactly representable.
    """
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    lattice = C.lattice
    rates = 2.0 * C.entries * lattice.nu
    kill = np.zeros(lattice.size)
    if mode == "killed":
        spec = spec if spec is not None else C.spec
        if spec is None:
            raise ConfigurationError("killed mode needs the kernel to compute death rates")
        lo, hi = lattice.cell_box
        kill = 2.0 * outside_box_mass(spec, lattice.points, lo, hi)
    rates, kill = _quantize(rates, kill)
    rates = rates.copy()
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -(rates.sum(axis=1) + kill))
    return GeneratorMatrix(lattice, rates, kill, mode, C.policy, C)


def dirichlet_form(C, f, g=None):
    """``n^-2d sum_{x,y} (f(x) - f(y)) (g(x) - g(y)) C(x, y)``."""
    N = C.lattice.size
    f = check_site_function(f, N, "f")
    g = f if g is None else check_site_function(g, N, "g")
    Cm = C.entries
    deg = Cm.sum(axis=1)
    val = 2.0 * (np.einsum("i...,i,i...->...", f, deg, g) - np.einsum("i...,i...->...", f, Cm @ g))
    return val * C.lattice.nu**2


def export_triples(matrix, lattice, path, **header):
    """Write nonzero entries as ``row,col,value`` with a ``#`` metadata line."""
    M = sparse.coo_array(matrix)
    meta = {"n": lattice.n, "box": lattice.describe()["box"], **header}
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "value"])
        order = np.lexsort((M.col, M.row))
        for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
            writer.writerow([int(r), int(c), repr(float(v))])


def chain_from_rates(rates, points=None, nu=1.0, kill=None):
    """Generator of a chain given by a symmetric nonnegative rate matrix.

    The returned generator lives on a :class:`SiteSet`; its conductances are
    ``rates / (2 nu)`` so the usual form identities hold.
    """
    Q = np.array(rates, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ConfigurationError("rates must be a square matrix")
    np.fill_diagonal(Q, 0.0)
    if np.any(Q < 0) or not np.allclose(Q, Q.T, rtol=1e-14, atol=0):
        raise ConfigurationError("rates must be symmetric and nonnegative")
    N = Q.shape[0]
    sites = SiteSet(np.arange(N, dtype=float) if points is None else points, nu)
    kill = np.zeros(N) if kill is None else np.asarray(kill, dtype=float)
    C = ConductanceMatrix(sites, Q / (2.0 * nu), "literal")
    Q, kill = _quantize(Q, kill)
    np.fill_diagonal(Q, -(Q.sum(axis=1) + kill))
    mode = "killed" if np.any(kill > 0) else "conservative"
    return GeneratorMatrix(sites, Q, kill, mode, "literal", C)
