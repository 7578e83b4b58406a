"""Quadrature rules for power-law singular integrands.

Radial integrals are split into dyadic annuli ``[a, 2a]``; a power-law
density contributes a geometric sequence over those annuli, so the remainder
beyond the last annulus is summed in closed form once successive ratios agree.
"""

import functools
import math

import numpy as np

from .exceptions import CapabilityError, QuadratureError

MAX_OUTWARD_ANNULI = 3000
MAX_INWARD_ANNULI = 400
MAX_PANELS = 20000


@functools.lru_cache(maxsize=None)
def gauss_legendre(order):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@functools.lru_cache(maxsize=None)
def sphere_rule(dimension, resolution=64):
    """Directions on the unit sphere with weights summing to its surface area.

    d=1 uses the two directions exactly; d=2 the periodic trapezoid rule
    (spectrally accurate for smooth angular dependence); d=3 a product of
    Gauss nodes in the polar cosine and the trapezoid rule in azimuth.
    """
    if dimension == 1:
        dirs = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
    elif dimension == 2:
        th = 2.0 * np.pi * (np.arange(resolution) + 0.5) / resolution
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        w = np.full(resolution, 2.0 * np.pi / resolution)
    elif dimension == 3:
        z, wz = np.polynomial.legendre.leggauss(max(resolution // 2, 2))
        phi = 2.0 * np.pi * (np.arange(resolution) + 0.5) / resolution
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        rho = np.sqrt(1.0 - zz**2)
        dirs = np.stack([rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(resolution, 2.0 * np.pi / resolution)[None, :]).ravel()
    else:
        raise CapabilityError(f"sphere quadrature implemented for d <= 3, got d={dimension}")
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


def sphere_area(dimension):
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0)


def _panel_nodes(a, b, order, panel_width):
    """Nodes/weights covering ``[a_i, b_i]`` with a common panel count."""
    t, w = gauss_legendre(order)
    length = b - a
    panels = 1
    if panel_width is not None and panel_width > 0:
        panels = int(min(max(np.ceil(np.max(length) / panel_width), 1), MAX_PANELS))
    offsets = (np.arange(panels)[:, None] + t[None, :]).ravel() / panels
    weights = np.tile(w, panels) / panels
    nodes = a[:, None] + length[:, None] * offsets[None, :]
    return nodes, length[:, None] * weights[None, :]


def radial_integral(density, lo, hi, *, order=20, rtol=1e-12, panel_width=None,
                    extrapolate=True):
    """Integrate ``density`` elementwise over ``[lo_i, hi_i]``.

    Parameters
    ----------
    density : callable
        ``density(rho, idx)`` returns values of shape ``rho.shape`` where row
        ``j`` of ``rho`` belongs to element ``idx[j]``.
    lo, hi : array_like
        Integration limits per element; ``lo == 0`` integrates inward towards
        the origin (``hi`` must then be finite), ``hi`` may be ``inf``.
    panel_width : float, optional
        Maximum panel length inside an annulus, for oscillatory densities.
    extrapolate : bool
        Allow the geometric tail sum (towards 0 or towards infinity).

    Returns
    -------
    value, error : ndarray
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).copy()
    value = np.zeros(lo.shape)
    error = np.zeros(lo.shape)
    empty = hi <= lo
    inward = (lo == 0.0) & ~empty
    outward = (lo > 0.0) & ~empty
    if np.any(inward & ~np.isfinite(hi)):
        raise QuadratureError("inward integration needs a finite upper limit")
    for mask, is_inward in ((inward, True), (outward, False)):
        idx = np.flatnonzero(mask)
        if idx.size:
            v, e = _dyadic(density, idx, lo[idx], hi[idx], is_inward, order, rtol,
                           panel_width, extrapolate)
            value[idx] = v
            error[idx] = e
    return value, error


def _dyadic(density, idx, lo, hi, inward, order, rtol, panel_width, extrapolate):
    n = idx.size
    total = np.zeros(n)
    err = np.zeros(n)
    c1 = np.full(n, np.nan)
    c2 = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    budget = MAX_INWARD_ANNULI if inward else MAX_OUTWARD_ANNULI
    can_extrapolate = np.full(n, extrapolate) & (inward | ~np.isfinite(hi))
    for k in range(budget):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        if inward:
            b = hi[act] * 2.0 ** (-k)
            a = b / 2.0
        else:
            with np.errstate(over="ignore"):
                a = lo[act] * 2.0 ** k
                b = np.minimum(2.0 * a, hi[act])
        with np.errstate(over="ignore", invalid="ignore"):
            nodes, weights = _panel_nodes(a, b, order, panel_width)
            vals = density(nodes, idx[act])
            c = np.sum(vals * weights, axis=1)
        if not np.all(np.isfinite(c)):
            raise QuadratureError(
                f"radial quadrature diverged after {k} annuli", partial_value=total.copy())
        total[act] += c
        finished = np.zeros(act.size, dtype=bool)
        if not inward:
            finished |= b >= hi[act]
            err[act[finished]] = rtol * np.abs(total[act[finished]])
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = c / c1[act]
            r0 = c1[act] / c2[act]
        ok = can_extrapolate[act] & np.isfinite(r1) & np.isfinite(r0) & (r1 >= 0) & (r1 < 1)
        tail = np.where(ok, c * r1 / np.where(ok, 1.0 - r1, 1.0), 0.0)
        tail_err = np.where(ok, np.abs(tail) * np.abs(r1 - r0) / np.where(ok, 1.0 - r1, 1.0), np.inf)
        scale = np.abs(total[act] + tail)
        conv = ok & ~finished & (tail_err <= rtol * scale + 1e-300)
        total[act[conv]] += tail[conv]
        err[act[conv]] = tail_err[conv] + 4 * np.finfo(float).eps * scale[conv]
        zero = ~finished & ~conv & (c == 0) & (c1[act] == 0)
        # without extrapolation, stop once two annuli in a row are negligible
        small = (~finished & ~conv & ~can_extrapolate[act]
                 & (np.abs(c) <= 1e-3 * rtol * np.abs(total[act]))
                 & (np.abs(c1[act]) <= rtol * np.abs(total[act])))
        err[act[small]] = 10 * np.abs(c[small])
        done = finished | conv | zero | small
        active[act[done]] = False
        c2[act] = c1[act]
        c1[act] = c
    if np.any(active):
        bad = idx[active]
        raise QuadratureError(
            f"radial quadrature did not converge within {budget} annuli for "
            f"{bad.size} element(s)", partial_value=total.copy())
    return total, err
