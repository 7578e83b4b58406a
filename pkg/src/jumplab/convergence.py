"""Kernel sequences ``J_n -> J`` and checks of the resulting convergence.

The harness compares lattice chains built from each member against the
chain of the limit kernel at a common resolution: uniform integrability of
the tails and of the small jumps, weak convergence of the jump measures
away from the diagonal, and convergence of semigroups and resolvents on a
compact set.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_box, check_int, check_scalar
from .chain import assemble_generator, build_conductances, build_lattice, dirichlet_form
from .exceptions import CapabilityError, ConfigurationError
from .kernels import (KernelBounds, ModulatedKernel, OscillatoryModulation, SamplingPlan,
                      radial_moments, tail_masses, verify_bounds)
from .operators import holder_fit, resolvent, semigroup_apply
from .quadrature import gauss_legendre

#: lattice cells required per oscillation period of a member
CELLS_PER_PERIOD = 8
DEFAULT_ETAS = tuple(2.0**-k for k in range(1, 11))
ETA_NOTE = ("a finite eta grid cannot certify a statement holding for almost every "
            "eta; the columns are evidence on the sampled grid only")


@dataclass
class KernelSequenceSpec:
    """A family ``{J_n}`` indexed by ``index_set`` with its limit ``J``.

    Parameters
    ----------
    limit : KernelSpec
    member : callable
        ``member(n) -> KernelSpec``.
    index_set : sequence of int
    shared_bounds : KernelBounds, optional
        Constants claimed to hold for every member.
    labels : dict, optional
        Display value per index, e.g. the frequency of an oscillatory member.
    """

    limit: object
    member: object
    index_set: tuple
    shared_bounds: KernelBounds = None
    labels: dict = field(default_factory=dict)
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index_set = tuple(int(n) for n in self.index_set)
        if not self.index_set:
            raise ConfigurationError("index_set must not be empty")
        if len(set(self.index_set)) != len(self.index_set):
            raise ConfigurationError("index_set has repeated entries")

    def __getitem__(self, n):
        return self.member(n)

    def members(self):
        return [(n, self.member(n)) for n in self.index_set]

    def label(self, n):
        return self.labels.get(n, n)

    @property
    def dimension(self):
        return self.limit.dimension

    def verify_members(self, plan=None):
        """``verify_bounds`` of every member against ``shared_bounds``."""
        if self.shared_bounds is None:
            raise ConfigurationError("the sequence declares no shared bounds")
        return {n: verify_bounds(m, plan or SamplingPlan(), self.shared_bounds)
                for n, m in self.members()}


def oscillatory_sequence(limit, amplitude=0.5, frequencies=(2, 4, 8, 16, 32)):
    """``J_n(x, y) = J(x, y) (1 + a sin(omega_n (x_1 + y_1)))``, ``n = 1, 2, ...``.

    The factor lies in ``[1 - |a|, 1 + |a|]``, so the limit's bounds scaled by
    these numbers hold for every member; weak convergence to ``J`` follows
    from the Riemann-Lebesgue lemma as ``omega_n`` grows.
    """
    amplitude = check_scalar(amplitude, "amplitude", lower=-1, upper=1, include_lower=False,
                             include_upper=False, error=ConfigurationError)
    freqs = [check_scalar(w, "frequency", lower=0, include_lower=False,
                          error=ConfigurationError) for w in frequencies]
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise ConfigurationError("frequencies must be strictly increasing")
    index = tuple(range(1, len(freqs) + 1))
    base = limit.bounds
    if base is None and hasattr(limit, "natural_bounds"):
        base = limit.natural_bounds()
    shared = None
    if base is not None:
        lo, hi = 1 - abs(amplitude), 1 + abs(amplitude)
        shared = replace(base, kappa1=base.kappa1 * lo, kappa2=base.kappa2 * hi,
                         kappa3=base.kappa3 * hi, kappa4=base.kappa4 * lo)

    def member(n):
        if n not in index:
            raise ConfigurationError(f"index {n} is not in {index}")
        return ModulatedKernel(limit, OscillatoryModulation(amplitude, freqs[n - 1]))

    return KernelSequenceSpec(limit, member, index, shared,
                              labels=dict(zip(index, freqs)),
                              description={"kind": "oscillatory", "amplitude": amplitude,
                                           "frequencies": freqs})


def constant_sequence(limit, index_set=(1, 2, 3)):
    """``J_n = J`` for every index; every gap and error is zero."""
    bounds = limit.bounds
    if bounds is None and hasattr(limit, "natural_bounds"):
        bounds = limit.natural_bounds()
    return KernelSequenceSpec(limit, lambda n: limit, index_set, bounds,
                              description={"kind": "constant"})


def _x_samples(seq, samples):
    if samples is None:
        samples = np.linspace(-1.0, 1.0, 9)
    x = np.asarray(samples, dtype=float)
    return x.reshape(-1, seq.dimension)


# --------------------------------------------------------------------------
# uniform integrability

@dataclass
class UICReport:
    """Suprema over members and sample points of the far tail and near moment."""

    etas: np.ndarray
    far_tail: np.ndarray
    near_moment: np.ndarray
    far_error: np.ndarray
    near_error: np.ndarray
    threshold: float = 0.1
    note: str = ETA_NOTE

    @staticmethod
    def _column_ok(col, err, threshold):
        steps = np.diff(col) <= err[1:] + err[:-1]
        return bool(np.all(steps) and col[-1] <= threshold * col[0] + err[-1])

    @property
    def far_ok(self):
        return self._column_ok(self.far_tail, self.far_error, self.threshold)

    @property
    def near_ok(self):
        return self._column_ok(self.near_moment, self.near_error, self.threshold)

    @property
    def passed(self):
        return self.far_ok and self.near_ok

    def rows(self):
        return [(float(e), float(a), float(b)) for e, a, b in
                zip(self.etas, self.far_tail, self.near_moment)]


def verify_uic(seq, eta_grid=DEFAULT_ETAS, x_samples=None, *, threshold=0.1):
    """Tail mass beyond ``1 / eta`` and second moment within ``eta``, maximised
    over members and sample points, for each ``eta``.

    Both columns should decrease to zero along the grid; the report passes
    when they are nonincreasing (within quadrature error) and the last entry
    is at most ``threshold`` times the first.
    """
    etas = np.asarray(eta_grid, dtype=float)
    if etas.ndim != 1 or etas.size < 2 or np.any(etas <= 0):
        raise ConfigurationError("eta_grid must hold at least two positive values")
    if np.any(np.diff(etas) >= 0):
        raise ConfigurationError("eta_grid must be strictly decreasing")
    xs = _x_samples(seq, x_samples)
    far = np.full(etas.size, -np.inf)
    near = np.full(etas.size, -np.inf)
    far_err = np.zeros(etas.size)
    near_err = np.zeros(etas.size)
    for _, spec in seq.members():
        for i, eta in enumerate(etas):
            v, e = tail_masses(spec, xs, 1.0 / eta)
            j = int(np.argmax(v))
            if v[j] > far[i]:
                far[i], far_err[i] = v[j], e[j]
            v, e = radial_moments(spec, xs, 0.0, eta, 2.0)
            j = int(np.argmax(v))
            if v[j] > near[i]:
                near[i], near_err[i] = v[j], e[j]
    return UICReport(etas, far, near, far_err, near_err, threshold)


# --------------------------------------------------------------------------
# weak convergence away from the diagonal

@dataclass
class PairTestFunction:
    """A test function ``psi(x, y)`` supported in ``x_support x y_support``."""

    func: object
    x_support: tuple
    y_support: tuple
    name: str = "psi"

    def __call__(self, x, y):
        return self.func(x, y)


def bump(u):
    """Smooth bump ``exp(-1 / (1 - u^2))`` on ``(-1, 1)``, zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    out = np.zeros_like(u)
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def tensor_bump(cx, cy, scale):
    """``psi(x, y) = b((x - cx) / scale) b((y - cy) / scale)``."""
    scale = check_scalar(scale, "scale", lower=0, include_lower=False)
    return PairTestFunction(
        lambda x, y: bump((x - cx) / scale) * bump((y - cy) / scale),
        (cx - scale, cx + scale), (cy - scale, cy + scale),
        f"bump({cx:g},{cy:g};{scale:g})")


def antisymmetric_bump(cx, cy, scale):
    """``psi(x, y) - psi(y, x)`` for a tensor bump; integrates to zero."""
    psi = tensor_bump(cx, cy, scale)
    lo = min(cx, cy) - scale
    hi = max(cx, cy) + scale
    return PairTestFunction(lambda x, y: psi(x, y) - psi(y, x), (lo, hi), (lo, hi),
                            f"antisym({cx:g},{cy:g};{scale:g})")


def default_test_functions():
    """Tensor bumps at three scales plus one antisymmetric function."""
    return [tensor_bump(0.0, 0.5, s) for s in (0.25, 0.5, 1.0)] + \
        [antisymmetric_bump(0.0, 0.5, 0.5)]


def _panels(a, b, max_width, geometric_from=None):
    """Panel edges on ``[a, b]``, geometric (ratio 2) above ``geometric_from``."""
    if b <= a:
        return np.array([])
    edges = [a]
    if geometric_from is not None and geometric_from > 0:
        e = max(a, geometric_from)
        while 2 * e < b:
            e = 2 * e
            if e > a:
                edges.append(e)
    edges.append(b)
    out = [edges[0]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        k = max(1, math.ceil((hi - lo) / max_width))
        out.extend(np.linspace(lo, hi, k + 1)[1:])
    return np.asarray(out)


def _rule(edges, order):
    t, w = gauss_legendre(order)
    widths = np.diff(edges)
    nodes = (edges[:-1, None] + widths[:, None] * t[None, :]).ravel()
    weights = (widths[:, None] * w[None, :]).ravel()
    return nodes, weights


def pair_integral(spec, psi, eta, *, order=20):
    """``int int psi(x, y) J(x, y) 1{eta < |x - y| < 1 / eta} dy dx`` in d = 1.

    Uses Gauss-Legendre panels in ``x`` and in the jump ``w = y - x``, at most
    a quarter period wide for oscillatory kernels; the difference to a
    lower-order rule is returned as the error estimate.
    """
    if spec.dimension != 1:
        raise CapabilityError("pair_integral is implemented for d = 1 only")
    xa, xb = psi.x_support
    ya, yb = psi.y_support
    period = 2 * math.pi / spec.oscillation if spec.oscillation else np.inf
    width = min((xb - xa) / 8, period / 4)
    x_edges = _panels(xa, xb, width)
    totals = []
    for q in (order, max(order // 2, 4)):
        xs, wx = _rule(x_edges, q)
        total = 0.0
        for sign in (1.0, -1.0):
            lo_w = max(eta, sign * (ya - xb) if sign > 0 else -(yb - xa))
            hi_w = min(1.0 / eta, (yb - xa) if sign > 0 else (xb - ya))
            if hi_w <= lo_w:
                continue
            w_edges = _panels(lo_w, hi_w, min(width, (hi_w - lo_w) / 4), geometric_from=lo_w)
            ws, ww = _rule(w_edges, q)
            X = xs[:, None]
            W = sign * ws[None, :]
            val = psi(X, X + W) * spec.jump(X[..., None], W[..., None])
            total += float(wx @ val @ ww)
        totals.append(total)
    return totals[0], abs(totals[0] - totals[1])


@dataclass
class WeakProbeReport:
    eta: float
    labels: list
    names: list
    limit_values: np.ndarray
    values: np.ndarray
    gaps: np.ndarray
    errors: np.ndarray
    errors_limit: np.ndarray
    ratio_threshold: float = 0.05
    note: str = ETA_NOTE

    def function_passed(self, j):
        g = self.gaps[:, j]
        tol = self.errors[:, j] + self.errors_limit[j] + 1e-12 * max(1.0, abs(self.limit_values[j]))
        if np.all(g <= tol):
            return True
        decreasing = np.all(np.diff(g) <= tol[1:] + tol[:-1])
        return bool(decreasing and g[-1] <= self.ratio_threshold * g[0] + tol[-1])

    @property
    def passed(self):
        return all(self.function_passed(j) for j in range(len(self.names)))

    def rows(self):
        out = []
        for j, name in enumerate(self.names):
            for i, lab in enumerate(self.labels):
                out.append((name, lab, float(self.values[i, j]), float(self.gaps[i, j])))
        return out


def weak_convergence_probe(seq, eta, test_functions=None, *, order=20, threads=1):
    """Integrals of each test function against ``J_n`` on ``eta < |x-y| < 1/eta``.

    The gap to the same integral with the limit kernel should decrease along
    the index set; a test function passes when the gaps are nonincreasing
    and the last is below 5% of the first (or all are at quadrature level).
    """
    eta = check_scalar(eta, "eta", lower=0, upper=1, include_lower=False, include_upper=False)
    fns = default_test_functions() if test_functions is None else list(test_functions)
    if not fns:
        raise ConfigurationError("no test functions given")
    lim = [pair_integral(seq.limit, psi, eta, order=order) for psi in fns]
    members = seq.members()

    def work(item):
        return [pair_integral(item[1], psi, eta, order=order) for psi in fns]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(work, members))
    vals = np.array([[v for v, _ in row] for row in results])
    errs = np.array([[e for _, e in row] for row in results])
    limv = np.array([v for v, _ in lim])
    return WeakProbeReport(eta, [seq.label(n) for n, _ in members], [p.name for p in fns],
                           limv, vals, np.abs(vals - limv), errs,
                           np.array([e for _, e in lim]))


# --------------------------------------------------------------------------
# semigroup and resolvent convergence

@dataclass
class ConvergenceTable:
    """Sup errors on a compact set, one row per member."""

    kind: str
    parameter: float
    resolution: int
    indices: list
    labels: list
    errors: np.ndarray
    ratio_threshold: float = 0.1
    refined_resolution: int = None
    refined_errors: np.ndarray = None
    refinement_tolerance: float = 0.25
    diagnostics: dict = field(default_factory=dict)
    absolute_floor: float = 1e-10

    @property
    def trivial(self):
        return bool(np.all(self.errors <= self.absolute_floor))

    @property
    def decreasing(self):
        return bool(self.trivial or np.all(np.diff(self.errors) < 0))

    @property
    def final_ratio(self):
        return float(self.errors[-1] / self.errors[0]) if self.errors[0] > 0 else 0.0

    @property
    def refinement_change(self):
        """Largest relative change of an entry between the two resolutions."""
        if self.refined_errors is None:
            return None
        a, b = self.errors, self.refined_errors
        scale = np.maximum(np.maximum(a, b), self.absolute_floor)
        return float(np.max(np.abs(a - b) / scale))

    @property
    def passed(self):
        if self.trivial:
            ok = True
        else:
            ok = self.decreasing and self.final_ratio < self.ratio_threshold
        change = self.refinement_change
        if change is not None and not (self.trivial and np.all(self.refined_errors <= self.absolute_floor)):
            ok = ok and change < self.refinement_tolerance
        return bool(ok)

    def rows(self):
        out = []
        for i, (n, lab) in enumerate(zip(self.indices, self.labels)):
            row = {"index": n, "label": lab, "sup_error": float(self.errors[i]),
                   "resolution": self.resolution, "parameter": self.parameter}
            if self.refined_errors is not None:
                row["refined_sup_error"] = float(self.refined_errors[i])
                row["refined_resolution"] = self.refined_resolution
            out.append(row)
        return out


def check_resolution(seq, resolution):
    """Raise if a member oscillates faster than ``resolution`` can follow."""
    resolution = check_int(resolution, "resolution", lower=2, error=ConfigurationError)
    h = 1.0 / resolution
    for n, spec in seq.members():
        omega = getattr(spec, "oscillation", 0.0)
        if omega and CELLS_PER_PERIOD * h > 2 * math.pi / omega:
            raise ConfigurationError(
                f"lattice n={resolution} gives fewer than {CELLS_PER_PERIOD} cells per "
                f"period of member {n} (omega={omega}); need n >= "
                f"{math.ceil(CELLS_PER_PERIOD * omega / (2 * math.pi))}")
    return resolution


def _site_values(f, lattice):
    if callable(f):
        vals = np.asarray(f(lattice.points), dtype=float)
        if vals.shape == (lattice.size, 1):
            vals = vals[:, 0]
    else:
        vals = np.asarray(f, dtype=float)
    if vals.shape != (lattice.size,):
        raise ConfigurationError(f"f must give one value per site ({lattice.size}), "
                                 f"got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("f must be finite on the lattice")
    return vals


def _compact_mask(lattice, compact):
    lo, hi = check_box(compact, lattice.dimension)
    pts = lattice.points
    return np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)


def _generators(seq, lattice, threads, policy):
    def build(spec):
        return assemble_generator(build_conductances(spec, lattice, policy=policy),
                                  "conservative")

    members = seq.members()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        gens = list(pool.map(build, [seq.limit] + [m for _, m in members]))
    return gens[0], gens[1:], members


def _table(kind, seq, param, f, resolution, compact, box, threads, policy, apply):
    resolution = check_resolution(seq, resolution)
    lattice = build_lattice(seq.dimension, resolution, box)
    mask = _compact_mask(lattice, compact)
    if not np.any(mask):
        raise ConfigurationError("the compact set contains no lattice sites")
    fv = _site_values(f, lattice)
    A0, gens, members = _generators(seq, lattice, threads, policy)
    ref = apply(A0, fv)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outs = list(pool.map(lambda A: apply(A, fv), gens))
    errors = np.array([np.max(np.abs(u - ref)[mask]) for u in outs])
    table = ConvergenceTable(kind, param, resolution, [n for n, _ in members],
                             [seq.label(n) for n, _ in members], errors)
    return table, (lattice, mask, fv, gens, outs)


def _with_refinement(table, refine, run):
    if refine is not None:
        other, _ = run(refine)
        table.refined_resolution = other.resolution
        table.refined_errors = other.errors
    return table


def semigroup_convergence(seq, t, f, resolution, compact, *, box=((-3.0, 3.0),),
                          refine=None, threads=1, policy="literal"):
    """``sup_compact |P_t^(n) f - P_t f|`` for each member, conservative mode.

    Parameters
    ----------
    f : callable or array
        Bounded function of the site coordinates (shape ``(N, d)``), or its
        values on the lattice.
    refine : int, optional
        Second resolution; the table then records how much each entry moves.

    Raises
    ------
    ConfigurationError
        If the lattice has fewer than eight cells per oscillation period.
    """
    t = check_scalar(t, "t", lower=0)

    def run(res):
        return _table("semigroup", seq, t, f, res, compact, box, threads, policy,
                      lambda A, v: semigroup_apply(A, t, v))

    table, _ = run(resolution)
    return _with_refinement(table, refine, run)


def resolvent_convergence(seq, lam, f, resolution, compact, *, box=((-3.0, 3.0),),
                          refine=None, threads=1, policy="literal", diagnostics=True):
    """``sup_compact |U^lam_n f - U^lam f|`` for each member, conservative mode.

    With ``diagnostics`` the table also records, per member, the form energy
    ``E_n(U f, U f)`` against the bound ``|f|^2 / lam`` and the Holder envelope
    constant of ``U f`` on the compact set.
    """
    lam = check_scalar(lam, "lambda", lower=0, include_lower=False)

    def run(res):
        return _table("resolvent", seq, lam, f, res, compact, box, threads, policy,
                      lambda A, v: resolvent(A, lam, v))

    table, (lattice, mask, fv, gens, outs) = run(resolution)
    if diagnostics:
        bound = float(np.sum(fv**2) * lattice.nu / lam)
        energies = [float(dirichlet_form(A.conductances, u)) for A, u in zip(gens, outs)]
        consts = []
        pts = lattice.points[mask]
        for u in outs:
            if np.ptp(u[mask]) > 0:
                consts.append(holder_fit(u[mask], pts).constant)
        spread = max(consts) / min(consts) if consts else 1.0
        table.diagnostics = {"energies": energies, "energy_bound": bound,
                             "energy_ok": bool(max(energies) <= bound * (1 + 1e-9)),
                             "holder_constants": consts, "holder_spread": float(spread),
                             "holder_ok": bool(spread <= 2.0)}
    return _with_refinement(table, refine, run)
