"""Monte Carlo simulation of the lattice chain.

Every path draws from its own counter-based stream, ``Philox`` keyed by
``(seed, path index)``, so estimates do not depend on how paths are batched
or how many worker threads run them.  Paths in a batch advance in lockstep
with vectorised event selection.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_scalar
from .chain import assemble_generator, build_conductances
from .exceptions import ConfigurationError, DominatingRateError

DEATH = -1
STAY = -2
BATCH = 2048
STREAM_BLOCK = 256
_MASK64 = (1 << 64) - 1


def path_stream(seed, path_index):
    """Independent generator for path ``path_index`` of experiment ``seed``."""
    key = (int(seed) & _MASK64) | (int(path_index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


class _Streams:
    """Per-path uniform buffers refilled block-wise from each path's stream."""

    def __init__(self, generators):
        self.gens = generators
        self.buf = np.stack([g.random(2 * STREAM_BLOCK) for g in generators])
        self.pos = np.zeros(len(generators), dtype=int)

    def draw(self, idx):
        empty = idx[self.pos[idx] >= 2 * STREAM_BLOCK]
        for i in empty:
            self.buf[i] = self.gens[i].random(2 * STREAM_BLOCK)
            self.pos[i] = 0
        p = self.pos[idx]
        u = self.buf[idx[:, None], p[:, None] + np.arange(2)]
        self.pos[idx] += 2
        return u[:, 0], u[:, 1]


@dataclass
class _Table:
    """Event table: ``cum[x]`` is the cumulative rate row, ``dest``/``kind`` per column."""

    cum: np.ndarray
    dest: np.ndarray
    kind: np.ndarray
    points: np.ndarray

    @property
    def total(self):
        return self.cum[:, -1]


def _direct_table(A):
    N = A.size
    rates = A.rates.copy()
    np.fill_diagonal(rates, 0.0)
    cum = np.cumsum(np.hstack([rates, A.kill[:, None]]), axis=1)
    dest = np.concatenate([np.arange(N), [DEATH]])
    kind = np.zeros(N + 1, dtype=int)
    return _Table(cum, dest, kind, A.lattice.points)


class MeyerChain:
    """Small-jump chain with large jumps spliced in by thinning.

    Candidates arrive at the constant rate ``2 kappa3``; at site ``x`` a
    candidate becomes a large jump with probability ``a(x) / (2 kappa3)``,
    where ``a(x)`` is the lattice large-jump intensity: the rates of the full
    chain minus those of the small-jump chain, including the extra death rate
    in killed mode.  The destination is drawn by inverse transform on that row.

    Parameters
    ----------
    small : GeneratorMatrix
        Chain built from ``J 1_{|x-y| <= 1}``.
    full : GeneratorMatrix or KernelSpec
        Chain of the full kernel on the same lattice and mode, or the kernel
        to build it from.
    kappa3 : float
        Declared tail bound; ``2 kappa3`` must dominate every ``a(x)``.
    """

    def __init__(self, small, full, kappa3, quad_order=8):
        self.kappa3 = check_scalar(kappa3, "kappa3", lower=0, include_lower=False,
                                   error=ConfigurationError)
        if not hasattr(full, "rates"):
            C = build_conductances(full, small.lattice, quad_order, small.policy)
            full = assemble_generator(C, small.mode, full)
        if full.size != small.size or full.mode != small.mode:
            raise ConfigurationError("small and full chains must share lattice and mode")
        self.small = small
        self.full = full
        large = full.rates - small.rates
        np.fill_diagonal(large, 0.0)
        self.large = np.maximum(large, 0.0)
        self.large_kill = np.maximum(full.kill - small.kill, 0.0)
        self.large_total = self.large.sum(axis=1) + self.large_kill
        worst = int(np.argmax(self.large_total))
        if self.large_total[worst] > 2 * self.kappa3:
            raise DominatingRateError(
                f"large-jump intensity {self.large_total[worst]:.6g} at site "
                f"{small.lattice.points[worst].tolist()} exceeds 2*kappa3 = {2 * self.kappa3}")

    @property
    def lattice(self):
        return self.small.lattice

    def table(self):
        N = self.small.size
        small = self.small.rates.copy()
        np.fill_diagonal(small, 0.0)
        reject = 2 * self.kappa3 - self.large_total
        rows = np.hstack([small, self.small.kill[:, None], self.large,
                          self.large_kill[:, None], reject[:, None]])
        cum = np.cumsum(rows, axis=1)
        dest = np.concatenate([np.arange(N), [DEATH], np.arange(N), [DEATH], [STAY]])
        kind = np.concatenate([np.zeros(N + 1, int), np.ones(N + 1, int), [2]])
        return _Table(cum, dest, kind, self.lattice.points)


def _table_of(chain):
    return chain.table() if isinstance(chain, MeyerChain) else _direct_table(chain)


def _search(cum, rows, target):
    lo = np.zeros(rows.size, dtype=int)
    hi = np.full(rows.size, cum.shape[1] - 1)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        right = cum[rows, mid] <= target
        lo = np.where(right, mid + 1, lo)
        hi = np.where(right, hi, mid)
    return lo


def _run(table, start, t_max, generators, exit_ball=None, levy=None, record=False):
    """Advance all paths of one batch until ``t_max``, death, or exit."""
    m = len(generators)
    streams = _Streams(generators)
    site = np.full(m, start)
    time = np.zeros(m)
    active = np.ones(m, dtype=bool)
    out = {"exit_time": np.full(m, np.inf), "death_time": np.full(m, np.inf),
           "jumps": np.zeros(m, dtype=int), "spliced": np.zeros(m, dtype=int),
           "candidates": np.zeros(m, dtype=int)}
    if levy is not None:
        F, g = levy
        out["jump_sum"] = np.zeros(m)
        out["time_integral"] = np.zeros(m)
    if record:
        out["events"] = [[] for _ in range(m)]
    if exit_ball is not None:
        center, radius = exit_ball
        outside = np.linalg.norm(table.points - center, axis=1) > radius * (1 + 1e-12)
    total = table.total
    if t_max <= 0:
        return out
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        lam = total[site[idx]]
        stuck = lam <= 0
        if np.any(stuck):
            s = idx[stuck]
            if levy is not None:
                out["time_integral"][s] += g[site[s]] * (t_max - time[s])
            active[s] = False
            idx = idx[~stuck]
            lam = lam[~stuck]
            if idx.size == 0:
                break
        u0, u1 = streams.draw(idx)
        t_new = time[idx] - np.log1p(-u0) / lam
        over = t_new >= t_max
        if levy is not None:
            hold_end = np.where(over, t_max, t_new)
            out["time_integral"][idx] += g[site[idx]] * (hold_end - time[idx])
        active[idx[over]] = False
        idx, t_new, u1, lam = idx[~over], t_new[~over], u1[~over], lam[~over]
        if idx.size == 0:
            continue
        src = site[idx]
        col = _search(table.cum, src, u1 * lam)
        dest = table.dest[col]
        kind = table.kind[col]
        moved = dest != STAY
        out["candidates"][idx] += kind >= 1
        out["spliced"][idx] += kind == 1
        out["jumps"][idx] += moved
        dead = dest == DEATH
        jumped = dest >= 0
        if levy is not None:
            j = idx[jumped]
            out["jump_sum"][j] += F[src[jumped], dest[jumped]]
        if record:
            for p, t, dsite in zip(idx[moved], t_new[moved], dest[moved]):
                out["events"][p].append((float(t), int(dsite)))
        site[idx[jumped]] = dest[jumped]
        time[idx] = t_new
        out["death_time"][idx[dead]] = t_new[dead]
        active[idx[dead]] = False
        if exit_ball is not None:
            left = dead | (jumped & outside[np.where(jumped, dest, 0)])
            out["exit_time"][idx[left]] = t_new[left]
            active[idx[left]] = False
    out["final_site"] = site
    return out


def _simulate(chain, x0, t_max, n_paths, seed, threads=1, **kwargs):
    """Run ``n_paths`` paths in fixed batches; results are ordered by path index."""
    table = _table_of(chain)
    lattice = chain.lattice
    start = lattice.index(x0)
    batches = [range(b, min(b + BATCH, n_paths)) for b in range(0, n_paths, BATCH)]

    def work(paths):
        gens = [path_stream(seed, p) for p in paths]
        return _run(table, start, t_max, gens, **kwargs)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, batches))
    else:
        parts = [work(b) for b in batches]
    out = {}
    for key in parts[0]:
        if key == "events":
            out[key] = [e for p in parts for e in p[key]]
        else:
            out[key] = np.concatenate([p[key] for p in parts])
    return out


# --------------------------------------------------------------------------
# public API

@dataclass
class PathSample:
    """One trajectory: jump epochs and sites after each jump."""

    start: int
    times: list
    sites: list
    end_time: float
    killed: bool = False
    kill_time: float = None
    spliced: int = 0
    points: np.ndarray = field(default=None, repr=False)

    def exit_record(self, center, radius):
        """First ``(time, site)`` landing strictly outside the closed ball, or ``None``."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        for t, s in zip(self.times, self.sites):
            if np.linalg.norm(self.points[s] - c) > radius * (1 + 1e-12):
                return t, s
        if self.killed:
            return self.kill_time, DEATH
        return None

    def to_csv(self, path):
        """Write the path as ``time,site_index`` rows, starting at ``(0, start)``."""
        from .io import write_csv
        rows = [(0.0, self.start), *zip(self.times, self.sites)]
        if self.killed:
            rows.append((self.kill_time, DEATH))
        return write_csv(path, ["time", "site_index"], rows)


def _rng_seed(rng):
    if isinstance(rng, (int, np.integer)):
        return int(rng), 0
    if isinstance(rng, tuple) and len(rng) == 2:
        return int(rng[0]), int(rng[1])
    raise ConfigurationError("rng must be a seed or a (seed, path_index) pair")


def simulate_path(chain, x0, t_max, rng=0):
    """Simulate one path of the chain (or of a :class:`MeyerChain`) up to ``t_max``.

    ``rng`` is a seed or a ``(seed, path_index)`` pair selecting the stream.
    """
    t_max = check_scalar(t_max, "t_max", lower=0)
    seed, index = _rng_seed(rng)
    table = _table_of(chain)
    start = chain.lattice.index(x0)
    out = _run(table, start, t_max, [path_stream(seed, index)], record=True)
    events = out["events"][0]
    killed = bool(np.isfinite(out["death_time"][0]))
    times = [t for t, s in events if s >= 0]
    sites = [s for t, s in events if s >= 0]
    return PathSample(start, times, sites, float(out["death_time"][0]) if killed else t_max,
                      killed, float(out["death_time"][0]) if killed else None,
                      int(out["spliced"][0]), table.points)


def simulate_meyer(small, full, x0, t_max, rng=0, kappa3=None, quad_order=8):
    """One path of the spliced construction; see :class:`MeyerChain`."""
    chain = small if isinstance(small, MeyerChain) else MeyerChain(small, full, kappa3,
                                                                   quad_order)
    return simulate_path(chain, x0, t_max, rng)


@dataclass
class ExitEstimate:
    """Monte Carlo estimate with its standard error and provenance."""

    kind: str
    value: float
    stderr: float
    samples: int
    seed: int
    params: dict
    censored: int = 0
    flagged: bool = False

    @property
    def probability(self):
        return self.value if self.kind == "probability" else None

    @property
    def mean_exit(self):
        return self.value if self.kind == "mean" else None


def _check_ball(lattice, x0, r, margin):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    r = check_scalar(r, "r", lower=0, include_lower=False, error=ConfigurationError)
    lo, hi = (np.asarray(b) for b in lattice.box)
    reach = r * (1 + margin)
    if np.any(x0 - reach < lo - 1e-12) or np.any(x0 + reach > hi + 1e-12):
        raise ConfigurationError(
            f"ball B({x0.tolist()}, {r}) with margin {margin} does not fit in the "
            f"lattice box {lattice.box}")
    return x0, r


def exit_times(chain, x0, r, t_max, n_paths, seed, *, margin=1.0, threads=1):
    """First exit times from ``B(x0, r)`` (``inf`` if not exited by ``t_max``)."""
    x0, r = _check_ball(chain.lattice, x0, r, margin)
    n_paths = check_int(n_paths, "n_paths", lower=1)
    out = _simulate(chain, x0, t_max, n_paths, seed, threads, exit_ball=(x0, r))
    return out["exit_time"]


def estimate_exit_prob(chain, x0, r, t, n_paths, seed, *, margin=1.0, threads=1):
    """Binomial estimate of ``P(tau_B(x0, r) < t)``; ``t`` may be a list (coupled)."""
    n_paths = check_int(n_paths, "n_paths", lower=100)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ConfigurationError("t must be nonnegative")
    tau = exit_times(chain, x0, r, float(ts.max()), n_paths, seed, margin=margin,
                     threads=threads)
    res = []
    for ti in ts:
        p = float(np.count_nonzero(tau < ti)) / n_paths
        res.append(ExitEstimate("probability", p, math.sqrt(p * (1 - p) / n_paths), n_paths,
                                seed, {"x0": np.atleast_1d(x0).tolist(), "r": r,
                                       "t": float(ti)}))
    return res[0] if np.ndim(t) == 0 else res


def default_horizon(chain, r):
    """Censoring horizon ``100 r^beta1`` using the kernel's declared ``beta1``."""
    C = chain.small.conductances if isinstance(chain, MeyerChain) else chain.conductances
    spec = getattr(C, "spec", None)
    beta1 = None
    if spec is not None and spec.bounds is not None:
        beta1 = spec.bounds.beta1
    elif spec is not None and hasattr(spec, "alpha"):
        beta1 = spec.alpha
    return 100.0 * r ** (beta1 if beta1 is not None else 1.0)


def estimate_mean_exit(chain, x0, r, n_paths, seed, *, t_max=None, margin=1.0, threads=1):
    """Sample mean of ``tau_B(x0, r)``; censored at ``t_max`` and flagged above 1%."""
    n_paths = check_int(n_paths, "n_paths", lower=100)
    x0, r = _check_ball(chain.lattice, x0, r, margin)
    t_max = default_horizon(chain, r) if t_max is None else t_max
    tau = exit_times(chain, x0, r, t_max, n_paths, seed, margin=margin, threads=threads)
    censored = int(np.count_nonzero(~np.isfinite(tau)))
    vals = np.minimum(tau, t_max)
    return ExitEstimate("mean", float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths)),
                        n_paths, seed, {"x0": x0.tolist(), "r": r, "t_max": t_max},
                        censored, censored > 0.01 * n_paths)


@dataclass
class LevyReport:
    jump_mean: float
    integral_mean: float
    stderr: float
    samples: int
    passed: bool


def pair_matrix(f, lattice):
    """Matrix ``F[x, y] = f(x, y)`` over sites with zero diagonal."""
    if callable(f):
        P = lattice.points
        F = np.asarray(f(P[:, None, :], P[None, :, :]), dtype=float)
        F = np.broadcast_to(F, (lattice.size, lattice.size)).copy()
    else:
        F = np.array(f, dtype=float)
    if F.shape != (lattice.size, lattice.size):
        raise ConfigurationError("pair function must give an N x N matrix")
    np.fill_diagonal(F, 0.0)
    return F


def levy_system_check(chain, f, T, n_paths, seed, *, x0=None, threads=1, n_sigma=3.0):
    """Compare ``E sum_{s<=T} f(X_s-, X_s)`` with ``E int_0^T sum_y f(X_s, y) q(X_s, y) ds``.

    Both are estimated on the same paths; the test uses the standard error of
    their per-path difference.
    """
    T = check_scalar(T, "T", lower=0)
    n_paths = check_int(n_paths, "n_paths", lower=2)
    lattice = chain.lattice
    F = pair_matrix(f, lattice)
    rates = chain.rates.copy()
    np.fill_diagonal(rates, 0.0)
    g = np.sum(F * rates, axis=1)
    if x0 is None:
        x0 = lattice.points[lattice.size // 2]
    out = _simulate(chain, x0, T, n_paths, seed, threads, levy=(F, g))
    diff = out["jump_sum"] - out["time_integral"]
    mean = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(n_paths))
    passed = abs(mean) <= n_sigma * se if se > 0 else mean == 0.0
    return LevyReport(float(out["jump_sum"].mean()), float(out["time_integral"].mean()), se,
                      n_paths, bool(passed))


def jump_counts(chain, x0, t_max, n_paths, seed, threads=1):
    """Per-path counts of jumps, spliced jumps and thinning candidates up to ``t_max``."""
    out = _simulate(chain, x0, t_max, n_paths, seed, threads)
    return {k: out[k] for k in ("jumps", "spliced", "candidates")}


def occupation_fractions(chain, x0, t_max, n_paths, seed, threads=1, return_stderr=False):
    """Fraction of ``[0, t_max]`` each path spends per site, averaged over paths."""
    lattice = chain.lattice
    N = lattice.size
    out = np.zeros(N)
    se = np.zeros(N)
    for s in range(N):
        F = np.zeros((N, N))
        g = np.zeros(N)
        g[s] = 1.0
        res = _simulate(chain, x0, t_max, n_paths, seed, threads, levy=(F, g))
        frac = res["time_integral"] / t_max
        out[s] = frac.mean()
        se[s] = frac.std(ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.inf
    return (out, se) if return_stderr else out


def stopped_values(chain, h, x0, r, t, n_paths, seed, *, center=None, margin=0.0, threads=1):
    """Samples of ``h(X_{t ^ tau})`` started at ``x0``, with ``tau`` the exit
    time from ``B(center, r)`` (``center`` defaults to ``x0``)."""
    center = x0 if center is None else center
    center, r = _check_ball(chain.lattice, center, r, margin)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.linalg.norm(x0 - center) >= r:
        raise ConfigurationError("the starting point must lie inside the ball")
    out = _simulate(chain, x0, t, n_paths, seed, threads, exit_ball=(center, r))
    h = np.asarray(h, dtype=float)
    vals = h[out["final_site"]]
    # death sends the chain to the cemetery, where boundary data is 0
    vals = np.where(np.isfinite(out["death_time"]), 0.0, vals)
    return vals
