"""Command line entry point: ``jumplab <experiment> --config scenario.toml``.

A scenario file is TOML with ``[kernel]``, ``[lattice]``, optional
``[sequence]`` and per-experiment tables under ``[experiments.<name>]``.
``jumplab run`` executes every experiment listed in the file, in order; each
experiment subcommand runs just that one.  ``jumplab reference`` prints every
default.

Each run writes CSV tables under ``<out>/<experiment>/``, a deterministic
``summary.json`` and a ``metadata.json`` holding timings and the thread count.
Exit status is 0 when every check passes, 1 when one fails (or an experiment
errors) and 2 for configuration errors, which are all reported before any
computation starts.
"""

import argparse
import copy
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy
from scipy.stats import ks_2samp

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from ._validation import check_box
from .chain import MODES, POLICIES, assemble_generator, build_conductances, build_lattice
from .convergence import (CELLS_PER_PERIOD, antisymmetric_bump, bump, constant_sequence,
                          oscillatory_sequence, resolvent_convergence,
                          semigroup_convergence, tensor_bump, verify_uic,
                          weak_convergence_probe)
from .exceptions import ConfigurationError, JumpLabError
from .functionals import L_lower_bound, compute_L, compute_L1, compute_L2, order_comparability
from .io import write_csv, write_json
from .kernels import (KernelBounds, ModulatedKernel, OrderField, OscillatoryModulation,
                      SamplingPlan, StableKernel, TabulatedKernel, VariableOrderKernel,
                      verify_bounds)
from .operators import (DENSE_LIMIT, heat_kernel, holder_fit, resolvent, semigroup_apply,
                        semigroup_preimage, solve_harmonic, spectral_decompose,
                        verify_resolvent_identity)
from .pathsim import (MeyerChain, estimate_exit_prob, estimate_mean_exit, exit_times,
                      levy_system_check, stopped_values)
from .quadrature import sphere_area

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": "jumplab-out"}
KERNEL_DEFAULTS = {"family": "stable", "alpha": 0.5, "kappa": 1.0, "dimension": 1}
LATTICE_DEFAULTS = {"n": 256, "box": [[-3.0, 3.0]], "mode": "killed", "policy": "literal",
                    "quad_order": 8}
SEQUENCE_DEFAULTS = {"kind": "oscillatory", "amplitude": 0.5,
                     "frequencies": [2.0, 4.0, 8.0, 16.0, 32.0]}

DEFAULTS = {
    "kernel-verify": {"region": [-1.0, 1.0], "n_points": 64, "n_random_pairs": 2000,
                      "n_tail_points": 16, "center": 0.0, "radius": 0.25,
                      "check_defect": False},
    "functionals": {"points": [0.0, 0.5], "scales": [0.1, 0.25, 0.5], "z0": 0.0,
                    "radii": [2.0**-k for k in range(1, 9)], "alpha": None, "resolution": 33,
                    "inner": "at-scale", "closed_form_tol": 1e-6,
                    "comparability_threshold": 10.0, "comparability": None},
    "chain-build": {"export": False},
    "exit-mc": {"center": 0.0, "radii": [0.1, 0.2, 0.4], "times": [0.01, 0.02, 0.05],
                "n_paths": 10000, "margin": 1.0, "compare_n": 128, "stability_factor": 2.0,
                "n_sigma": 3.0},
    "mean-exit-mc": {"center": 0.0, "radii": [0.05, 0.1, 0.2, 0.4], "n_paths": 10000,
                     "margin": 1.0, "t_max": None, "expected_slope": None,
                     "slope_tol": 0.15},
    "levy-check": {"T": 0.5, "n_paths": 10000, "x0": 0.0,
                   "functions": ["zero", "square", "indicator"], "n_sigma": 3.0},
    "meyer-check": {"center": 0.0, "radius": 0.4, "n_paths": 2000, "t_max": 1000.0,
                    "truncation": 1.0, "kappa3": None, "level": 0.05, "margin": 1.0},
    "heat-kernel": {"t": 0.05, "s": 0.05, "y": 0.0, "tol": 1e-8,
                    "lattice": {"n": 128, "box": [[-2.0, 2.0]]}},
    "resolvent-check": {"lambda": 1.0, "t": 0.1, "tol": 1e-8, "device_tol": 1e-9,
                        "lattice": {"n": 128, "box": [[-2.0, 2.0]]}},
    "harmonic": {"center": 0.0, "radius": 0.5, "boundary": "sign", "x0": 0.1, "t": 0.5,
                 "n_paths": 10000, "n_sigma": 3.0, "tol": 1e-8,
                 "lattice": {"n": 128, "box": [[-2.0, 2.0]]}},
    "holder": {"targets": ["harmonic", "heat", "resolvent"], "region_radius": 0.25,
               "scales": [1.0 / 32, 0.25], "radius": 0.5, "t": 0.05, "y": 0.0,
               "lambda": 1.0, "steps": 8, "max_shift": 0.1,
               "lattice": {"n": 128, "box": [[-2.0, 2.0]]}},
    "uic-check": {"etas": [2.0**-k for k in range(1, 11)],
                  "x_samples": [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
                  "threshold": 0.1, "check_members": True},
    "weak-probe": {"eta": 0.05, "centers": [0.0, 0.5], "scales": [0.25, 0.5, 1.0],
                   "antisymmetric": True, "ratio_threshold": 0.05},
    "converge": {"which": ["semigroup", "resolvent"], "t": 0.5, "lambda": 1.0,
                 "resolution": 512, "refine": 256, "compact": [[-1.0, 1.0]],
                 "box": [[-3.0, 3.0]], "f": "bump", "ratio_threshold": 0.1,
                 "refinement_tol": 0.25},
}

DESCRIPTIONS = {
    "kernel-verify": "sampled certificate of the declared kernel bounds",
    "functionals": "L1, L2 and L(z0, r) tables with closed-form and lower-bound checks",
    "chain-build": "cell-averaged conductances and the generator",
    "exit-mc": "Monte Carlo P(tau < t) against t L(z0, r)",
    "mean-exit-mc": "mean exit time scaling in r",
    "levy-check": "jump sums against compensator integrals",
    "meyer-check": "exit times of the spliced chain against the direct chain",
    "heat-kernel": "heat kernel slice, symmetry, Chapman-Kolmogorov, uniformization",
    "resolvent-check": "resolvent identity, constants and the U h = P_t f device",
    "harmonic": "harmonic function in a ball, maximum principle and martingale check",
    "holder": "Holder exponents under lattice refinement",
    "uic-check": "uniform integrability of a kernel sequence",
    "weak-probe": "weak convergence of a kernel sequence against test functions",
    "converge": "semigroup and resolvent convergence of a kernel sequence",
}
SEQUENCE_EXPERIMENTS = ("uic-check", "weak-probe", "converge")


# --------------------------------------------------------------------------
# configuration

def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _merge(defaults, given, where, problems):
    out = copy.deepcopy(defaults)
    for key, value in (given or {}).items():
        if key not in defaults:
            problems.append(f"{where}: unknown key {key!r}")
            continue
        ref = defaults[key]
        if isinstance(ref, dict) and isinstance(value, dict):
            out[key] = {**ref, **value}
        elif isinstance(ref, bool) and not isinstance(value, bool):
            problems.append(f"{where}.{key} must be true or false")
        elif isinstance(ref, (int, float)) and not isinstance(ref, bool) and \
                (isinstance(value, bool) or not isinstance(value, (int, float))):
            problems.append(f"{where}.{key} must be a number, got {value!r}")
        elif isinstance(ref, list) and not isinstance(value, list):
            problems.append(f"{where}.{key} must be a list")
        else:
            out[key] = value
    return out


def _bounds_for(kernel, given):
    base = None
    if isinstance(kernel, StableKernel):
        base = kernel.natural_bounds()
    elif isinstance(kernel, VariableOrderKernel):
        desc = kernel.order.description
        if desc.get("kind") == "sinusoidal":
            s_lo = desc["mean"] - abs(desc["amplitude"])
            s_hi = desc["mean"] + abs(desc["amplitude"])
        elif desc.get("kind") == "constant":
            s_lo = s_hi = desc["value"]
        else:
            s_lo = s_hi = None
        if s_lo is not None:
            d = kernel.dimension
            base = KernelBounds(kappa1=kernel.c1, kappa2=kernel.c2, beta1=s_lo, beta2=s_hi,
                                kappa3=kernel.c * sphere_area(d) / kernel.far_order,
                                kappa4=kernel.c1, alpha=s_lo)
    elif isinstance(kernel, ModulatedKernel) and isinstance(kernel.base, StableKernel):
        b = kernel.base.natural_bounds()
        lo, hi = kernel.modulation.lower, kernel.modulation.upper
        base = KernelBounds(kappa1=b.kappa1 * lo, kappa2=b.kappa2 * hi, beta1=b.beta1,
                            beta2=b.beta2, kappa3=b.kappa3 * hi, kappa4=b.kappa4 * lo,
                            alpha=b.alpha)
    if given:
        fields = asdict(base) if base is not None else {}
        fields.update(given)
        return KernelBounds(**fields)
    return base


def build_kernel(cfg):
    """Kernel from a ``[kernel]`` table (bounds derived unless given)."""
    cfg = dict(cfg)
    given_bounds = cfg.pop("bounds", None)
    family = cfg.pop("family", "stable")
    trunc = cfg.pop("truncation", None)
    try:
        if family == "stable":
            k = StableKernel(cfg.pop("alpha", 0.5), cfg.pop("kappa", 1.0),
                             int(cfg.pop("dimension", 1)), truncation=trunc)
        elif family == "variable-order":
            order = cfg.pop("order", {"mean": 0.5, "amplitude": 0.2, "frequency": 1.0})
            if "value" in order:
                field_ = OrderField.constant(order["value"])
            else:
                field_ = OrderField.sinusoidal(order.get("mean", 0.5),
                                               order.get("amplitude", 0.2),
                                               order.get("frequency", 1.0))
            k = VariableOrderKernel(field_, cfg.pop("c", 1.0), cfg.pop("c1", None),
                                    cfg.pop("c2", None), cfg.pop("far_order", 1.0),
                                    int(cfg.pop("dimension", 1)), truncation=trunc)
        elif family == "modulated":
            base = build_kernel(cfg.pop("base", {"family": "stable"}))
            k = ModulatedKernel(base, OscillatoryModulation(cfg.pop("amplitude", 0.5),
                                                            cfg.pop("frequency", 1.0)),
                                truncation=trunc)
        elif family == "tabulated":
            k = TabulatedKernel.from_csv(cfg.pop("path"), truncation=trunc)
        else:
            raise ConfigurationError(f"kernel.family {family!r} is not one of stable, "
                                     "variable-order, modulated, tabulated")
    except KeyError as exc:
        raise ConfigurationError(f"kernel: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"kernel: {exc}") from None
    if cfg:
        raise ConfigurationError(f"kernel: unknown keys {sorted(cfg)}")
    k.bounds = _bounds_for(k, given_bounds)
    return k


class Scenario:
    """Validated configuration with the shared kernel, lattice and sequence."""

    def __init__(self, raw, seed=None, threads=None, out=None):
        problems = []
        self.raw = raw
        known = {"seed", "threads", "out", "kernel", "lattice", "sequence", "experiments"}
        for key in raw:
            if key not in known:
                problems.append(f"unknown top-level key {key!r}")
        self.seed = raw.get("seed", GLOBAL_DEFAULTS["seed"]) if seed is None else seed
        self.threads = raw.get("threads", GLOBAL_DEFAULTS["threads"]) if threads is None \
            else threads
        self.out = Path(raw.get("out", GLOBAL_DEFAULTS["out"]) if out is None else out)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            problems.append(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            problems.append(f"threads must be a positive integer, got {self.threads!r}")
        kcfg = {**KERNEL_DEFAULTS, **raw.get("kernel", {})} if raw.get("kernel", {}).get(
            "family", "stable") == "stable" else dict(raw.get("kernel", {}))
        self.kernel_cfg = kcfg
        try:
            self.kernel = build_kernel(kcfg)
        except JumpLabError as exc:
            problems.append(str(exc))
            self.kernel = None
        self.lattice_cfg = _merge(LATTICE_DEFAULTS, raw.get("lattice"), "lattice", problems)
        self.sequence_cfg = _merge(SEQUENCE_DEFAULTS, raw.get("sequence"), "sequence",
                                   problems)
        self.problems = problems

    def lattice_params(self, params):
        out = {**self.lattice_cfg, **params.get("lattice", {})}
        return out

    def lattice(self, params, n=None):
        lp = self.lattice_params(params)
        d = self.kernel.dimension
        return build_lattice(d, lp["n"] if n is None else n, lp["box"])

    def generator(self, params, n=None, kernel=None):
        lp = self.lattice_params(params)
        kernel = kernel or self.kernel
        lat = self.lattice(params, n)
        C = build_conductances(kernel, lat, lp["quad_order"], lp["policy"])
        return assemble_generator(C, lp["mode"], kernel)

    def sequence(self):
        cfg = self.sequence_cfg
        if cfg["kind"] == "oscillatory":
            return oscillatory_sequence(self.kernel, cfg["amplitude"], cfg["frequencies"])
        if cfg["kind"] == "constant":
            return constant_sequence(self.kernel)
        raise ConfigurationError(f"sequence.kind {cfg['kind']!r} is not oscillatory or constant")

    def resolved(self, names, params):
        return {"seed": self.seed, "kernel": self.kernel_cfg, "lattice": self.lattice_cfg,
                "sequence": self.sequence_cfg if any(n in SEQUENCE_EXPERIMENTS for n in names)
                else None, "experiments": {n: params[n] for n in names}}


def _box_violation(scn, params, center, reach, what):
    lp = scn.lattice_params(params)
    try:
        lo, hi = check_box(lp["box"], scn.kernel.dimension)
    except JumpLabError as exc:
        return [f"lattice.box: {exc}"]
    c = np.broadcast_to(np.asarray(center, dtype=float), lo.shape)
    if np.any(c - reach < lo - 1e-12) or np.any(c + reach > hi + 1e-12):
        return [f"{what}: ball around {c.tolist()} with reach {reach:g} leaves the lattice "
                f"box {lp['box']} (precondition: ball plus margin inside the box)"]
    return []


def _validate(scn, name, p):
    """Experiment preconditions, returned as a list of messages."""
    k = scn.kernel
    out = []
    lp = scn.lattice_params(p)
    if lp["mode"] not in MODES:
        out.append(f"{name}: lattice.mode must be one of {MODES}")
    if lp["policy"] not in POLICIES:
        out.append(f"{name}: lattice.policy must be one of {POLICIES}")
    if not isinstance(lp["n"], int) or lp["n"] < 2:
        out.append(f"{name}: lattice.n must be an integer >= 2")
    if k is not None and not out:
        try:
            lo, hi = check_box(lp["box"], k.dimension)
            sites = np.prod(np.floor(hi * lp["n"]) - np.ceil(lo * lp["n"]) + 1)
            if name in ("heat-kernel", "resolvent-check", "holder") and \
                    sites * (2 if name == "holder" else 1) ** k.dimension > DENSE_LIMIT:
                out.append(f"{name}: the lattice has more than {DENSE_LIMIT} sites, the "
                           "dense spectral limit")
        except JumpLabError as exc:
            out.append(f"{name}: lattice.box: {exc}")
    if k is None:
        return out
    if name in ("kernel-verify",) and k.bounds is None:
        out.append(f"{name}: kernel family {k.family} needs explicit [kernel.bounds]")
    if name in ("exit-mc", "mean-exit-mc"):
        for r in p["radii"]:
            if not 0 < r < 1:
                out.append(f"{name}: radius {r} must lie in (0, 1)")
            out += _box_violation(scn, p, p["center"], r * (1 + p["margin"]), name)
        if name == "exit-mc" and (not p["times"] or min(p["times"]) <= 0):
            out.append("exit-mc: times must be positive")
        if p["n_paths"] < 100:
            out.append(f"{name}: n_paths must be at least 100")
    if name == "meyer-check":
        out += _box_violation(scn, p, p["center"], p["radius"] * (1 + p["margin"]), name)
        if k.truncation is not None:
            out.append("meyer-check: the kernel must not be truncated already")
    if name in ("harmonic",):
        out += _box_violation(scn, p, p["center"], p["radius"], name)
        if abs(p["x0"] - p["center"]) >= p["radius"]:
            out.append("harmonic: x0 must lie inside the ball")
        if p["boundary"] not in ("sign", "linear", "indicator"):
            out.append("harmonic: boundary must be sign, linear or indicator")
    if name == "holder":
        bad = set(p["targets"]) - {"harmonic", "heat", "resolvent"}
        if bad:
            out.append(f"holder: unknown targets {sorted(bad)}")
        out += _box_violation(scn, p, 0.0, p["radius"], name)
    if name in SEQUENCE_EXPERIMENTS and k.dimension != 1:
        out.append(f"{name}: kernel sequences are supported in d = 1 only")
    if name == "uic-check":
        e = p["etas"]
        if len(e) < 2 or any(b >= a for a, b in zip(e, e[1:])) or min(e) <= 0:
            out.append("uic-check: etas must be positive and strictly decreasing")
    if name == "weak-probe" and not 0 < p["eta"] < 1:
        out.append("weak-probe: eta must lie in (0, 1)")
    if name == "converge":
        freqs = scn.sequence_cfg["frequencies"] if scn.sequence_cfg["kind"] == "oscillatory" \
            else [0.0]
        for res in (p["resolution"], p["refine"]):
            if res is None:
                continue
            need = math.ceil(CELLS_PER_PERIOD * max(freqs) / (2 * math.pi))
            if res < need:
                out.append(f"converge: resolution {res} is below {need}, the minimum for "
                           f"{CELLS_PER_PERIOD} cells per period at omega={max(freqs)}")
        bad = set(p["which"]) - {"semigroup", "resolvent"}
        if bad:
            out.append(f"converge: unknown entries in which: {sorted(bad)}")
        if p["f"] not in ("bump", "one"):
            out.append("converge: f must be bump or one")
    return out


# --------------------------------------------------------------------------
# experiments; each returns (checks, tables, extra)

def _check(passed, **detail):
    return {"passed": bool(passed), **detail}


def _declared(scn):
    b = scn.kernel.bounds
    if b is None:
        raise ConfigurationError("this experiment needs kernel bounds")
    return b


def run_kernel_verify(scn, p):
    plan = SamplingPlan(region=tuple(p["region"]), n_points=p["n_points"],
                        n_random_pairs=p["n_random_pairs"], n_tail_points=p["n_tail_points"],
                        seed=scn.seed, center=p["center"], radius=p["radius"],
                        check_defect=p["check_defect"])
    report = verify_bounds(scn.kernel, plan)
    checks, rows = {}, []
    for r in report.results:
        checks[r.name] = _check(r.passed, violation_ratio=r.violation_ratio,
                                witness=r.witness, witness_value=r.witness_value,
                                note=r.note or None)
        rows.append([r.name, r.passed, r.violation_ratio, r.witness, r.witness_value, r.note])
        if r.note:
            print(f"note [{r.name}]: {r.note}")
    tables = {"bounds.csv": (["condition", "passed", "violation_ratio", "witness",
                              "witness_value", "note"], rows)}
    return checks, tables, {"bounds": asdict(scn.kernel.bounds)}


def run_functionals(scn, p):
    k = scn.kernel
    d = k.dimension
    rows, worst = [], 0.0
    closed = isinstance(k, StableKernel) and k.truncation is None
    area = sphere_area(d)
    for x in p["points"]:
        for s in p["scales"]:
            l1, l2 = compute_L1(k, x, s), compute_L2(k, x, s)
            row = [x, s, l1.value, l1.quadrature_error, l2.value, l2.quadrature_error]
            if closed:
                c1 = k.kappa * area * s**-k.alpha / k.alpha
                c2 = k.kappa * area * s ** (2 - k.alpha) / (2 - k.alpha)
                worst = max(worst, abs(l1.value / c1 - 1), abs(l2.value / c2 - 1))
                row += [c1, c2]
            rows.append(row)
    header = ["x", "s", "L1", "L1_error", "L2", "L2_error"] + \
        (["L1_closed_form", "L2_closed_form"] if closed else [])
    checks = {}
    if closed:
        checks["closed-form"] = _check(worst <= p["closed_form_tol"], max_rel_error=worst)
    b = k.bounds
    alpha = p["alpha"]
    if alpha is None:
        alpha = float(k.order(np.atleast_1d(p["z0"]))) if isinstance(k, VariableOrderKernel) \
            else (b.alpha if b is not None else None)
    if alpha is None:
        raise ConfigurationError("functionals: set alpha or declare kernel bounds")
    lrows, margin = [], np.inf
    for r in p["radii"]:
        fv = compute_L(k, p["z0"], r, alpha, resolution=p["resolution"], inner=p["inner"])
        lb = L_lower_bound(b.kappa4, b.alpha, r, d) if b is not None else None
        if lb is not None:
            margin = min(margin, fv.value - lb)
        lrows.append([r, fv.value, fv.value * r**alpha, lb, fv.quadrature_error,
                      fv.details["L1_term"], fv.details["L2_term"]])
    if b is not None:
        checks["lower-bound"] = _check(margin >= 0, min_margin=margin)
    comp = p["comparability"]
    if comp is None:
        comp = isinstance(k, VariableOrderKernel)
    if comp:
        rep = order_comparability(k, p["z0"], p["radii"], threshold=p["comparability_threshold"],
                                  resolution=p["resolution"], inner=p["inner"])
        checks["comparability"] = _check(rep.passed, ratio=rep.ratio,
                                         envelope_ratio=rep.envelope_ratio,
                                         order_at_center=rep.order_at_center)
    tables = {"L1_L2.csv": (header, rows),
              "L.csv": (["r", "L", "L_compensated", "lower_bound", "quadrature_error",
                         "L1_term", "L2_term"], lrows)}
    return checks, tables, {"alpha": alpha}


def run_chain_build(scn, p):
    A = scn.generator(p)
    C = A.conductances.entries
    checks = {"symmetric": _check(np.array_equal(C, C.T)),
              "nonnegative": _check(bool(np.all(C >= 0)))}
    rs = A.rates.sum(axis=1) + A.kill
    checks["row-sums"] = _check(float(np.max(np.abs(rs))) == 0.0,
                                max_abs=float(np.max(np.abs(rs))))
    off = C[~np.eye(C.shape[0], dtype=bool)]
    rows = [["sites", A.size], ["mode", A.mode], ["policy", A.policy],
            ["min_conductance", float(off.min())], ["max_conductance", float(off.max())],
            ["max_total_rate", float(np.max(-A.diagonal))],
            ["max_kill_rate", float(np.max(A.kill))]]
    tables = {"chain.csv": (["quantity", "value"], rows)}
    if p["export"]:
        I, J = np.nonzero(np.triu(C, 1))
        tables["conductances.csv"] = (["row", "col", "value"],
                                      [[i, j, C[i, j]] for i, j in zip(I, J)])
    return checks, tables, {}


def _exit_table(scn, p, n):
    A = scn.generator(p, n)
    k = scn.kernel
    alpha = _declared(scn).alpha
    rows, ratios = [], []
    for i, r in enumerate(p["radii"]):
        L = compute_L(k, p["center"], r, alpha).value
        est = estimate_exit_prob(A, p["center"], r, p["times"], p["n_paths"],
                                 scn.seed + 1000 * i, margin=p["margin"],
                                 threads=scn.threads)
        for e in est:
            t = e.params["t"]
            ratio = e.value / (t * L)
            ratios.append(ratio)
            rows.append([n, r, t, e.value, e.stderr, L, ratio])
    return rows, np.array(ratios)


def run_exit_mc(scn, p):
    n = scn.lattice_params(p)["n"]
    rows, ratios = _exit_table(scn, p, n)
    checks = {"finite-ratio": _check(bool(np.all(np.isfinite(ratios))),
                                     sup_ratio=float(ratios.max()))}
    nt = len(p["times"])
    mono = True
    for j in range(0, len(rows), nt):
        block = rows[j:j + nt]
        for a, b in zip(block, block[1:]):
            if b[3] < a[3] - p["n_sigma"] * math.hypot(a[4], b[4]):
                mono = False
    checks["monotone-in-t"] = _check(mono)
    if p["compare_n"]:
        rows2, ratios2 = _exit_table(scn, p, p["compare_n"])
        rows += rows2
        q = ratios.max() / ratios2.max() if ratios2.max() > 0 else np.inf
        f = p["stability_factor"]
        checks["lattice-stability"] = _check(1 / f < q < f, sup_ratio=float(ratios.max()),
                                             sup_ratio_compare=float(ratios2.max()),
                                             quotient=float(q))
    tables = {"exit.csv": (["n", "r", "t", "probability", "stderr", "L", "ratio"], rows)}
    return checks, tables, {}


def run_mean_exit(scn, p):
    A = scn.generator(p)
    rows, flagged = [], False
    for i, r in enumerate(p["radii"]):
        e = estimate_mean_exit(A, p["center"], r, p["n_paths"], scn.seed + 1000 * i,
                               t_max=p["t_max"], margin=p["margin"], threads=scn.threads)
        flagged |= e.flagged
        rows.append([r, e.value, e.stderr, e.censored])
    lr = np.log([row[0] for row in rows])
    lm = np.log([row[1] for row in rows])
    w = np.array([row[1] / row[2] for row in rows])
    slope = float(np.polyfit(lr, lm, 1, w=w)[0])
    expected = p["expected_slope"]
    if expected is None:
        expected = _declared(scn).alpha
    checks = {"slope": _check(abs(slope - expected) <= p["slope_tol"], slope=slope,
                              expected=expected),
              "censoring": _check(not flagged)}
    tables = {"mean_exit.csv": (["r", "mean_exit", "stderr", "censored"], rows)}
    return checks, tables, {"slope": slope}


LEVY_FUNCTIONS = {
    "zero": lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1]),
    "square": lambda x, y: np.minimum(np.sum((x - y) ** 2, axis=-1), 1.0),
    "indicator": lambda x, y: (np.sqrt(np.sum((x - y) ** 2, axis=-1)) > 0.1).astype(float),
    "cross": lambda x, y: np.tanh(x[..., 0]) * np.minimum(np.abs(y[..., 0] - x[..., 0]), 1.0),
}


def run_levy(scn, p):
    A = scn.generator(p)
    checks, rows = {}, []
    for i, name in enumerate(p["functions"]):
        if name not in LEVY_FUNCTIONS:
            raise ConfigurationError(f"levy-check: unknown function {name!r}")
        rep = levy_system_check(A, LEVY_FUNCTIONS[name], p["T"], p["n_paths"],
                                scn.seed + 1000 * i, x0=p["x0"], threads=scn.threads,
                                n_sigma=p["n_sigma"])
        ok = rep.passed
        if name == "zero":
            ok = ok and rep.jump_mean == 0.0 and rep.integral_mean == 0.0
        checks[name] = _check(ok, jump_mean=rep.jump_mean, integral_mean=rep.integral_mean,
                              stderr=rep.stderr)
        rows.append([name, rep.jump_mean, rep.integral_mean, rep.stderr, ok])
    return checks, {"levy.csv": (["function", "jump_mean", "integral_mean", "stderr",
                                  "passed"], rows)}, {}


def run_meyer(scn, p):
    k = scn.kernel
    A = scn.generator(p)
    small_kernel = k.truncated(p["truncation"])
    As = scn.generator(p, kernel=small_kernel)
    kappa3 = p["kappa3"] if p["kappa3"] is not None else 1.05 * _declared(scn).kappa3
    M = MeyerChain(As, A, kappa3)
    td = exit_times(A, p["center"], p["radius"], p["t_max"], p["n_paths"], scn.seed,
                    margin=p["margin"], threads=scn.threads)
    tm = exit_times(M, p["center"], p["radius"], p["t_max"], p["n_paths"], scn.seed + 1,
                    margin=p["margin"], threads=scn.threads)
    td, tm = np.minimum(td, p["t_max"]), np.minimum(tm, p["t_max"])
    ks = ks_2samp(td, tm)
    checks = {"ks": _check(ks.pvalue >= p["level"], statistic=float(ks.statistic),
                           pvalue=float(ks.pvalue))}
    q = np.linspace(0.05, 0.95, 19)
    rows = [[qq, a, b] for qq, a, b in zip(q, np.quantile(td, q), np.quantile(tm, q))]
    return checks, {"meyer_quantiles.csv": (["quantile", "direct", "spliced"], rows)}, \
        {"kappa3": kappa3, "max_large_intensity": float(M.large_total.max())}


def _bump_values(points, center=0.0, width=1.0):
    return bump((points[:, 0] - center) / width)


def run_heat_kernel(scn, p):
    A = scn.generator(p)
    lat = A.lattice
    D = spectral_decompose(A)
    Phi = D.eigenvectors
    t, s = p["t"], p["s"]
    raw = (Phi * np.exp(-D.eigenvalues * t)) @ Phi.T
    sym = float(np.max(np.abs(raw - raw.T)) / np.max(np.abs(raw)))
    pt = heat_kernel(D, t)
    ps = heat_kernel(D, s)
    pst = heat_kernel(D, s + t)
    ck_prod = ps.values @ pt.values * lat.nu
    ck = float(np.max(np.abs(ck_prod - pst.values)) / np.max(np.abs(pst.values)))
    f = _bump_values(lat.points)
    uni = semigroup_apply(A, t, f)
    spec = semigroup_apply(A, t, f, method="spectral", decomp=D)
    diff = float(np.max(np.abs(uni - spec)) / np.max(np.abs(f)))
    tol = p["tol"]
    checks = {"symmetry": _check(sym <= tol, rel=sym),
              "chapman-kolmogorov": _check(ck <= tol, rel=ck),
              "spectral-vs-uniformization": _check(diff <= tol, rel=diff)}
    if A.mode == "conservative":
        one = np.ones(A.size)
        checks["mass"] = _check(np.array_equal(semigroup_apply(A, t, one), one) and
                                np.array_equal(D.apply(lambda m: np.exp(-m * t), one), one))
    else:
        mass = pt.row_mass()
        checks["sub-mass"] = _check(bool(np.all(mass <= 1 + tol)), max_mass=float(mass.max()))
    j = lat.index(p["y"])
    rows = [[*pt_, v] for pt_, v in zip(lat.points.tolist(), pt.values[:, j])]
    header = [f"x{i + 1}" for i in range(lat.dimension)] + ["p"]
    return checks, {"heat_kernel.csv": (header, rows)}, {}


def run_resolvent_check(scn, p):
    A = scn.generator(p)
    lam, t = p["lambda"], p["t"]
    rng = np.random.default_rng(scn.seed)
    f = rng.standard_normal(A.size)
    g = rng.standard_normal(A.size)
    rep = verify_resolvent_identity(A.conductances, A, lam, f, g)
    checks = {"resolvent-identity": _check(max(rep.discrepancy, rep.quadratic_discrepancy)
                                           <= p["tol"], bilinear=rep.discrepancy,
                                           quadratic=rep.quadratic_discrepancy)}
    if A.mode == "conservative":
        u = resolvent(A, lam, np.ones(A.size))
        checks["constant"] = _check(np.array_equal(u, np.full(A.size, 1.0 / lam)))
    D = spectral_decompose(A)
    h = semigroup_preimage(D, lam, t, f)
    lhs = resolvent(A, lam, h)
    rhs = semigroup_apply(A, t, f, method="spectral", decomp=D)
    dev = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    checks["device"] = _check(dev <= p["device_tol"], rel=dev)
    rows = [["bilinear", rep.lhs, rep.rhs, rep.discrepancy],
            ["quadratic", rep.quadratic_lhs, rep.quadratic_rhs, rep.quadratic_discrepancy],
            ["device", float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), dev]]
    return checks, {"resolvent.csv": (["identity", "lhs", "rhs", "rel_discrepancy"], rows)}, {}


def _boundary(kind, center):
    if kind == "sign":
        return lambda pts: np.sign(pts[:, 0] - center)
    if kind == "linear":
        return lambda pts: pts[:, 0] - center
    return lambda pts: (pts[:, 0] > center).astype(float)


def run_harmonic(scn, p):
    A = scn.generator(p)
    lat = A.lattice
    sol = solve_harmonic(A, (p["center"], p["radius"]), _boundary(p["boundary"], p["center"]))
    ext = sol.boundary[~sol.interior]
    lo = min(ext.min(), 0.0) if A.mode == "killed" else ext.min()
    hi = max(ext.max(), 0.0) if A.mode == "killed" else ext.max()
    hI = sol.values[sol.interior]
    checks = {"residual": _check(sol.residual <= p["tol"], residual=sol.residual),
              "max-principle": _check(bool(np.all((hI >= lo) & (hI <= hi))),
                                      min=float(hI.min()), max=float(hI.max()))}
    # paths start at x0 and are stopped on leaving the same ball
    start = lat.index(p["x0"])
    vals = stopped_values(A, sol.values, lat.points[start], p["radius"], p["t"], p["n_paths"],
                          scn.seed, center=p["center"], threads=scn.threads)
    target = float(sol.values[start])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    checks["martingale"] = _check(abs(mean - target) <= p["n_sigma"] * se, mean=mean,
                                  target=target, stderr=se)
    rows = [[*pt_, v, bool(i)] for pt_, v, i in zip(lat.points.tolist(), sol.values,
                                                     sol.interior)]
    header = [f"x{i + 1}" for i in range(lat.dimension)] + ["h", "interior"]
    return checks, {"harmonic.csv": (header, rows)}, {}


def _step_function(seed, box, steps):
    rng = np.random.default_rng(seed)
    levels = rng.choice([-1.0, 1.0], size=steps)
    lo, hi = box[0][0], box[0][1]

    def f(pts):
        idx = np.floor((pts[:, 0] - lo) / (hi - lo) * steps).astype(int)
        return levels[np.clip(idx, 0, steps - 1)]
    return f


def _holder_targets(scn, p, n):
    A = scn.generator(p, n)
    lat = A.lattice
    pts = lat.points
    reg = np.linalg.norm(pts, axis=1) <= p["region_radius"] * (1 + 1e-12)
    scales = tuple(p["scales"])
    out = {}
    if "harmonic" in p["targets"]:
        sol = solve_harmonic(A, (0.0, p["radius"]), _boundary("sign", 0.0))
        out["harmonic"] = holder_fit(sol.values[reg], pts[reg], scales=scales)
    need_decomp = "heat" in p["targets"]
    D = spectral_decompose(A) if need_decomp else None
    if "heat" in p["targets"]:
        col = heat_kernel(D, p["t"]).values[:, lat.index(p["y"])]
        out["heat"] = holder_fit(col[reg], pts[reg], scales=scales)
    if "resolvent" in p["targets"]:
        f = _step_function(scn.seed, scn.lattice_params(p)["box"], p["steps"])(pts)
        out["resolvent"] = holder_fit(resolvent(A, p["lambda"], f)[reg], pts[reg],
                                      scales=scales)
    return out


def run_holder(scn, p):
    n = scn.lattice_params(p)["n"]
    coarse = _holder_targets(scn, p, n)
    fine = _holder_targets(scn, p, 2 * n)
    checks, rows = {}, []
    for name in p["targets"]:
        a, b = coarse[name], fine[name]
        shift = abs(a.exponent - b.exponent)
        checks[name] = _check(a.exponent > 0 and b.exponent > 0 and shift < p["max_shift"],
                              exponent=a.exponent, refined_exponent=b.exponent, shift=shift)
        for nn, fit in ((n, a), (2 * n, b)):
            rows.append([name, nn, fit.exponent, fit.constant, fit.residual, fit.pairs])
    return checks, {"holder.csv": (["target", "n", "exponent", "constant", "residual",
                                    "pairs"], rows)}, \
        {"fits": {name: {"coarse": coarse[name].as_record(), "fine": fine[name].as_record()}
                  for name in p["targets"]}}


def run_uic(scn, p):
    seq = scn.sequence()
    rep = verify_uic(seq, p["etas"], p["x_samples"], threshold=p["threshold"])
    checks = {"far-tail": _check(rep.far_ok, first=float(rep.far_tail[0]),
                                 last=float(rep.far_tail[-1])),
              "near-moment": _check(rep.near_ok, first=float(rep.near_moment[0]),
                                    last=float(rep.near_moment[-1]))}
    if p["check_members"] and seq.shared_bounds is not None:
        reports = seq.verify_members(SamplingPlan(seed=scn.seed, n_random_pairs=500,
                                                  n_tail_points=8))
        bad = [n for n, r in reports.items() if not r.passed]
        checks["shared-bounds"] = _check(not bad, failing_members=bad)
    rows = [[e, a, b, ea, eb] for (e, a, b), ea, eb in zip(rep.rows(), rep.far_error,
                                                          rep.near_error)]
    return checks, {"uic.csv": (["eta", "far_tail", "near_moment", "far_error",
                                 "near_error"], rows)}, {"note": rep.note}


def run_weak(scn, p):
    seq = scn.sequence()
    cx, cy = p["centers"]
    fns = [tensor_bump(cx, cy, s) for s in p["scales"]]
    if p["antisymmetric"]:
        fns.append(antisymmetric_bump(cx, cy, p["scales"][len(p["scales"]) // 2]))
    rep = weak_convergence_probe(seq, p["eta"], fns, threads=scn.threads)
    rep.ratio_threshold = p["ratio_threshold"]
    checks = {name: _check(rep.function_passed(j), first_gap=float(rep.gaps[0, j]),
                           last_gap=float(rep.gaps[-1, j]))
              for j, name in enumerate(rep.names)}
    rows = [list(r) + [rep.limit_values[rep.names.index(r[0])]] for r in rep.rows()]
    return checks, {"weak.csv": (["function", "label", "integral", "gap", "limit"], rows)}, \
        {"note": rep.note}


def run_converge(scn, p):
    seq = scn.sequence()
    f = (lambda pts: _bump_values(pts)) if p["f"] == "bump" else \
        (lambda pts: np.ones(len(pts)))
    checks, tables = {}, {}
    common = dict(box=p["box"], refine=p["refine"], threads=scn.threads,
                  policy=scn.lattice_cfg["policy"])
    for which in p["which"]:
        if which == "semigroup":
            tab = semigroup_convergence(seq, p["t"], f, p["resolution"], p["compact"], **common)
        else:
            tab = resolvent_convergence(seq, p["lambda"], f, p["resolution"], p["compact"],
                                        **common)
        tab.ratio_threshold = p["ratio_threshold"]
        tab.refinement_tolerance = p["refinement_tol"]
        checks[f"{which}-decreasing"] = _check(tab.decreasing)
        checks[f"{which}-final-ratio"] = _check(tab.trivial or
                                                tab.final_ratio < p["ratio_threshold"],
                                                ratio=tab.final_ratio)
        if tab.refined_errors is not None:
            ch = tab.refinement_change
            checks[f"{which}-refinement"] = _check(tab.trivial or ch < p["refinement_tol"],
                                                   change=ch)
        if which == "resolvent" and tab.diagnostics:
            checks["resolvent-energy-bound"] = _check(tab.diagnostics["energy_ok"])
            checks["resolvent-holder-spread"] = _check(tab.diagnostics["holder_ok"],
                                                       spread=tab.diagnostics["holder_spread"])
        header = ["n_or_omega", "sup_error", "resolution", "t_or_lambda"]
        rows = [[r["label"], r["sup_error"], r["resolution"], r["parameter"]]
                for r in tab.rows()]
        if tab.refined_errors is not None:
            header += ["refined_sup_error", "refined_resolution"]
            rows = [row + [r["refined_sup_error"], r["refined_resolution"]]
                    for row, r in zip(rows, tab.rows())]
        tables[f"{which}.csv"] = (header, rows)
    return checks, tables, {}


RUNNERS = {
    "kernel-verify": run_kernel_verify, "functionals": run_functionals,
    "chain-build": run_chain_build, "exit-mc": run_exit_mc, "mean-exit-mc": run_mean_exit,
    "levy-check": run_levy, "meyer-check": run_meyer, "heat-kernel": run_heat_kernel,
    "resolvent-check": run_resolvent_check, "harmonic": run_harmonic, "holder": run_holder,
    "uic-check": run_uic, "weak-probe": run_weak, "converge": run_converge,
}


# --------------------------------------------------------------------------
# orchestration

def _prepare(raw, names, seed, threads, out):
    scn = Scenario(raw, seed, threads, out)
    problems = list(scn.problems)
    given = raw.get("experiments", {})
    for key in given:
        if key not in DEFAULTS:
            problems.append(f"experiments: unknown experiment {key!r}")
    params = {}
    for name in names:
        defaults = {"lattice": {}, **DEFAULTS[name]}
        params[name] = _merge(defaults, given.get(name), f"experiments.{name}", problems)
        for key in params[name]["lattice"]:
            if key not in LATTICE_DEFAULTS:
                problems.append(f"experiments.{name}.lattice: unknown key {key!r}")
    for name in names:
        problems += _validate(scn, name, params[name])
    if not problems and any(n in SEQUENCE_EXPERIMENTS for n in names):
        try:
            scn.sequence()
        except JumpLabError as exc:
            problems.append(f"sequence: {exc}")
    return scn, params, problems


def run_scenario(raw, names, *, seed=None, threads=None, out=None, stream=None):
    """Validate, run ``names`` and write all artifacts; returns the exit code."""
    stream = sys.stdout if stream is None else stream
    scn, params, problems = _prepare(raw, names, seed, threads, out)
    if problems:
        print("configuration error:", file=sys.stderr)
        for msg in problems:
            print(f"  - {msg}", file=sys.stderr)
        return EXIT_CONFIG
    scn.out.mkdir(parents=True, exist_ok=True)
    summary = {"jumplab_version": __version__, "numpy": np.__version__,
               "scipy": scipy.__version__, "config": scn.resolved(names, params),
               "experiments": {}}
    meta = {"threads": scn.threads, "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_time": {}}
    status = "pass"
    t_all = time.perf_counter()
    for name in names:
        t0 = time.perf_counter()
        entry = {"files": []}
        try:
            checks, tables, extra = RUNNERS[name](scn, params[name])
            for fname, (header, rows) in tables.items():
                path = write_csv(scn.out / name / fname, header, rows)
                entry["files"].append(path.relative_to(scn.out).as_posix())
            entry["checks"] = checks
            entry["extra"] = extra
            entry["status"] = "pass" if all(c["passed"] for c in checks.values()) else "fail"
        except ConfigurationError as exc:
            entry.update(status="error", error=f"{type(exc).__name__}: {exc}", checks={})
        except (JumpLabError, ArithmeticError, ValueError) as exc:
            entry.update(status="error", error=f"{type(exc).__name__}: {exc}", checks={})
        meta["wall_time"][name] = time.perf_counter() - t0
        summary["experiments"][name] = entry
        for cname, c in entry["checks"].items():
            print(f"{'PASS' if c['passed'] else 'FAIL'} {name}:{cname}", file=stream)
        if entry["status"] == "error":
            print(f"ERROR {name}: {entry['error']}", file=stream)
        if entry["status"] != "pass":
            status = "fail"
    summary["status"] = status
    meta["wall_time"]["total"] = time.perf_counter() - t_all
    write_json(scn.out / "summary.json", summary)
    write_json(scn.out / "metadata.json", meta)
    return EXIT_PASS if status == "pass" else EXIT_FAIL


def reference_text():
    """Markdown listing of every configuration default."""
    lines = ["# jumplab configuration reference", "",
             "Top-level keys: " + ", ".join(f"`{k} = {v!r}`" for k, v in GLOBAL_DEFAULTS.items()),
             "", "## [kernel]", ""]
    lines += [f"- `{k}` = `{v!r}`" for k, v in KERNEL_DEFAULTS.items()]
    lines += ["- families: `stable` (alpha, kappa, dimension), `variable-order` "
              "(order = {mean, amplitude, frequency} or {value}, c, c1, c2, far_order), "
              "`modulated` (base, amplitude, frequency), `tabulated` (path)",
              "- optional `truncation` and `[kernel.bounds]` (kappa1..kappa5, beta1, beta2, "
              "alpha); bounds are derived from the family when omitted", "", "## [lattice]", ""]
    lines += [f"- `{k}` = `{v!r}`" for k, v in LATTICE_DEFAULTS.items()]
    lines += ["", "## [sequence]", ""]
    lines += [f"- `{k}` = `{v!r}`" for k, v in SEQUENCE_DEFAULTS.items()]
    for name, d in DEFAULTS.items():
        lines += ["", f"## [experiments.{name}]", "", DESCRIPTIONS[name], ""]
        lines += [f"- `{k}` = `{v!r}`" for k, v in d.items()]
    return "\n".join(lines) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(prog="jumplab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"jumplab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run every experiment in the config")
    for name in DEFAULTS:
        sub.add_parser(name, parents=[common], help=DESCRIPTIONS[name])
    sub.add_parser("reference", help="print all configuration defaults")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "reference":
        sys.stdout.write(reference_text())
        return EXIT_PASS
    try:
        raw = load_config(args.config)
    except ConfigurationError as exc:
        print(f"configuration error:\n  - {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        names = list(raw.get("experiments", {}))
        if not names:
            print("configuration error:\n  - the config lists no [experiments]",
                  file=sys.stderr)
            return EXIT_CONFIG
    else:
        names = [args.command]
    return run_scenario(raw, names, seed=args.seed, threads=args.threads, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
