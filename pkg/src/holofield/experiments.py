"""Experiment registry, configs and deterministic CSV output.

Each experiment takes a parameter dict (already merged with its defaults)
and returns result rows plus named checks.  Configs are INI-style files:

    [experiment]
    name = ccr_mean_scalar
    seed = 1

    [grid]
    points = 64, 64

    [sweep]
    C = 8, 16, 32, 64

    [output]
    path = out/ccr.csv
"""

from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import fock, green, holo, microlocal, wick
from .fields import (
    ScalarKernel,
    example_h_hat,
    example_L_hat,
    h_closed_form,
    position_covariance_h,
    sample_modes,
)
from .lattice import Grid, RegularizedDelta
from .opalg import compose, krein_adjoint, mean_commutator_scalar


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_point: str
    metric: str
    value: float
    stderr: float
    paper_anchor: str


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    grid: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output_path: str | None = None

    def merged(self, defaults: dict) -> dict:
        out = dict(defaults)
        for section in (self.grid, self.scales, self.sweep, self.params):
            out.update(section)
        out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    description: str
    func: Callable
    defaults: dict
    criterion: int | None = None


class ConfigError(ValueError):
    pass


REGISTRY: dict = {}


def register(name, anchor, description, defaults=None, criterion=None):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, anchor, description, fn, dict(defaults or {}), criterion)
        return fn

    return wrap


def list_experiments() -> list:
    """Registry entries in stable (alphabetical) order."""
    return [REGISTRY[k] for k in sorted(REGISTRY)]


# --- config parsing ---------------------------------------------------------


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    missing = []
    if not cp.has_section("experiment"):
        missing += ["experiment.name", "experiment.seed"]
    else:
        for key in ("name", "seed"):
            if not cp.has_option("experiment", key):
                missing.append(f"experiment.{key}")
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    name = cp.get("experiment", "name").strip()
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}")
    try:
        seed = int(cp.get("experiment", "seed"))
    except ValueError as exc:
        raise ConfigError("experiment.seed must be an integer") from exc

    def section(sec):
        return {k: _parse_value(v) for k, v in cp.items(sec)} if cp.has_section(sec) else {}

    params = {k: v for k, v in section("experiment").items() if k not in ("name", "seed")}
    params.update(section("params"))
    out = cp.get("output", "path", fallback=None) if cp.has_section("output") else None
    return ExperimentConfig(name, seed, section("grid"), section("scales"), section("sweep"), params, out)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# --- running and CSV ----------------------------------------------------------


CSV_HEADER = ["experiment", "sweep_point", "metric", "value", "stderr", "paper_anchor"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.experiment, r.sweep_point, r.metric, _fmt(r.value), _fmt(r.stderr), r.paper_anchor])
    return buf.getvalue()


def run_experiment(config: ExperimentConfig):
    """Run one experiment; returns (rows, checks)."""
    exp = REGISTRY.get(config.experiment)
    if exp is None:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    params = config.merged(exp.defaults)
    unknown = sorted(set(params) - set(exp.defaults) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown parameters for {exp.name}: {', '.join(unknown)}")
    for k, v in exp.defaults.items():
        # a one-point sweep parses as a scalar
        if isinstance(v, list) and not isinstance(params[k], list):
            params[k] = [params[k]]
    return exp.func(params, _Rows(exp))


class _Rows:
    def __init__(self, exp: Experiment):
        self.exp = exp
        self.rows = []

    def add(self, point, metric, value, stderr=0.0):
        self.rows.append(ResultRow(self.exp.name, str(point), metric, float(value), float(stderr), self.exp.anchor))


class FitError(ValueError):
    pass


def _slope(x, y):
    """Log-log slope and its standard error."""
    y = np.asarray(y, float)
    if len(x) < 2 or not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise FitError(f"cannot fit a power law to {len(x)} point(s) with values {y.tolist()}")
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    return float(res.slope), float(res.stderr)


def _within(value, target, tol):
    return bool(abs(value - target) <= tol)


# --- criterion experiments ------------------------------------------------------


@register(
    "ccr_mean_scalar",
    "scalar field operators with a linear-in-frequency kernel; CCR in the statistical mean",
    "Exact mean commutator against the on-shell target over a C sweep.",
    {"points": [64, 64], "spacing": 1.0, "C": [8, 16, 32, 64], "delta_width": 0.25, "n_random": 1000, "mc_samples": 10000},
    criterion=1,
)
def _ccr_mean_scalar(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    grid = Grid(p["points"], p["spacing"])
    # exact algebraic identity at random continuous momenta
    worst = 0.0
    for C in p["C"]:
        L = example_L_hat(C, grid)
        # extended precision: L^2 ~ C^2 would eat the 1e-12 budget in doubles
        k = rng.uniform(-3, 3, (p["n_random"], grid.dim)).astype(np.longdouble)
        q = rng.uniform(-3, 3, (p["n_random"], grid.dim)).astype(np.longdouble)
        lhs = L.func((k + q / 2).T) ** 2 - L.func((k - q / 2).T) ** 2
        rhs = 2 * q[:, 0] + 2 * k[:, 0] * q[:, 0] / C**2
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs)))))
    out.add("all", "identity_max_rel_error", worst)

    delta = RegularizedDelta(p["delta_width"])
    spec = example_h_hat(grid, delta)
    hh = spec.covariance[..., 0, 0].real
    idx = grid.momentum_indices()
    labels = [tuple(int(c) for c in v) for v, val in zip(idx, hh.ravel()) if val > 1e-3 * hh.max() and v[0] > 0]
    residuals = []
    for C in p["C"]:
        L = example_L_hat(C, grid)
        num = den = 0.0
        for lab in labels:
            h_q = hh[tuple(np.mod(lab, grid.points))]
            band = mean_commutator_scalar(h_q, lab, L)
            qv = np.asarray(lab) * np.asarray(grid.momentum_spacing)
            q2 = qv[0] ** 2 - np.sum(qv[1:] ** 2)
            target = delta(q2) * np.sign(qv[0])
            ok = ~band.wrapped
            diff = band.values[ok] - target
            num += float(np.sum(np.abs(diff) ** 2))
            den += float(target**2 * ok.sum())
        res = np.sqrt(num / den)
        residuals.append(res)
        out.add(f"C={C}", "mean_commutator_residual", res)
    slope, se = _slope(p["C"], residuals)
    out.add("fit", "residual_slope", slope, se)

    # Monte Carlo estimate of the mean at one on-shell transfer
    lab = tuple(int(v) for v in max(labels, key=lambda v: hh[tuple(np.mod(v, grid.points))]))
    draws = sample_modes(spec, [lab, tuple(-np.asarray(lab))], p["mc_samples"], seed=p["seed"])
    prod = draws[:, 0, 0] * draws[:, 1, 0]
    exact_factor = grid.volume * hh[tuple(np.mod(lab, grid.points))]
    mean = prod.mean()
    se_mc = prod.real.std(ddof=1) / np.sqrt(prod.size)
    z = abs(mean.real - exact_factor) / se_mc
    out.add(str(lab), "mc_pair_mean_z", z)
    ok = worst <= 1e-12 and _within(slope, -2.0, 0.15)
    return out.rows, [Check("criterion 1: CCR-in-mean exponent", ok, f"identity {worst:.2e}, slope {slope:.3f}, mc z {z:.2f}")]


@register(
    "h_position_fft",
    "position-space covariance of the on-shell scalar spectrum",
    "FFT of the regularized covariance against the closed form away from the cone.",
    {"points": 48, "spacing": 1.0, "delta_width": 0.2, "cone_margin": 3.0, "min_radius": 3.0},
    criterion=2,
)
def _h_position_fft(p, out):
    n = int(p["points"])
    a = float(p["spacing"])
    grid = Grid((n,) * 4, a)
    h = position_covariance_h(grid, example_h_hat(grid, RegularizedDelta(p["delta_width"])))
    x = grid.positions()
    r = np.sqrt(x[1] ** 2 + x[2] ** 2 + x[3] ** 2)
    t = np.abs(x[0])
    exact = h_closed_form(x[0], r)
    # sigma_position is one lattice spacing
    mask = (np.abs(r - t) >= p["cone_margin"] * a) & (r >= p["min_radius"] * a)
    err = float(np.linalg.norm((h - exact)[mask]) / np.linalg.norm(exact[mask]))
    out.add(f"n={n}", "relative_l2_error", err)
    out.add(f"n={n}", "points_compared", int(mask.sum()))
    return out.rows, [Check("criterion 2: position covariance FFT", err < 0.1, f"relative L2 error {err:.3f} (needs < 0.1)")]


@register(
    "wick_exactness",
    "Gaussian moments by pairing enumeration",
    "Symbolic means against brute force, Monte Carlo z-scores and 1/sqrt(S) convergence.",
    {"points": [16, 16], "max_labels": 8, "words_per_size": 6, "mc_samples": 100000, "replicates": 32},
    criterion=3,
)
def _wick_exactness(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    grid = Grid(p["points"])
    spec = example_h_hat(grid)
    cov = wick.spec_covariance(spec)
    half = np.asarray(grid.points) // 4
    worst = 0.0
    for n in range(1, p["max_labels"] + 1):
        for _ in range(p["words_per_size"]):
            pts = rng.integers(-half, half + 1, (n, grid.dim))
            # pair up labels with their negatives so the means are nonzero
            for j in range(1, n, 2):
                pts[j] = -pts[j - 1]
            rng.shuffle(pts)
            labels = [wick.FieldLabel(point=tuple(int(v) for v in pt)) for pt in pts]
            sym = wick.mean_of_word(wick.WickWord.product(labels), cov, method="explicit").total
            bf = wick.brute_force_mean(labels, cov)
            worst = max(worst, abs(sym - bf) / max(1.0, abs(bf)))
    out.add("all", "symbolic_vs_brute_force", worst)
    w4 = wick.WickWord.product([wick.FieldLabel(point=(1, 2)), wick.FieldLabel(point=(-1, -2)), wick.FieldLabel(point=(3, 1)), wick.FieldLabel(point=(-3, -1))])
    rep = wick.mc_check(w4, spec, p["mc_samples"], p["seed"])
    z = max(rep.z_re, rep.z_im)
    out.add(f"S={p['mc_samples']}", "mc_z_max", z)
    slope, rms = wick.mc_convergence(w4, spec, replicates=p["replicates"], seed=p["seed"])
    for s, v in zip((1000, 10000, 100000), rms):
        out.add(f"S={s}", "mc_rms_error", v)
    out.add("fit", "mc_convergence_slope", slope)
    ok = worst <= 1e-12 and z < 5 and _within(slope, -0.5, 0.1)
    return out.rows, [Check("criterion 3: Wick engine exactness", ok, f"max dev {worst:.1e}, z {z:.2f}, slope {slope:.3f}")]


def _smooth_h(n, xi):
    t, r2 = xi[0], float(np.sum(np.asarray(xi[1:]) ** 2))
    g = np.exp(-0.5 * t * t - 0.3 * r2)
    return [g, -t * g, (t * t - 1) * g][n]


@register(
    "ccr_violation_terms",
    "outer pairings of the commutator with two spectator fields",
    "Outer and inner channels of the mean commutator against closed forms.",
    {"C": 3.0, "points_per_trial": 5, "lattice_points": [16, 16]},
    criterion=4,
)
def _ccr_violation(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    worst = 0.0
    smallest = np.inf
    for trial in range(p["points_per_trial"]):
        x, y, x1, x2 = rng.normal(size=(4, 2))
        res = wick.mean_of_word(wick.commutator_word(x, y, x1, x2, p["C"]), wick.position_covariance(_smooth_h))
        outer = res.channel_sum("outer")
        inner = res.channel_sum("inner")
        o_ref = wick.outer_closed_form(_smooth_h, x, y, x1, x2, p["C"])
        i_ref = wick.inner_closed_form(_smooth_h, x, y, x1, x2, p["C"])
        dev = max(abs(outer - o_ref) / abs(o_ref), abs(inner - i_ref) / max(abs(i_ref), 1e-300))
        worst = max(worst, dev)
        smallest = min(smallest, abs(outer))
        out.add(f"trial={trial}", "outer_abs", abs(outer))
    # same check with the lattice covariance of the on-shell spectrum
    grid = Grid(p["lattice_points"])
    hd = wick.lattice_time_derivatives(example_h_hat(grid))
    pts = [(0, 0), (2, 3), (1, -4), (5, 2)]
    res = wick.mean_of_word(wick.commutator_word(*pts, p["C"]), wick.position_covariance(hd))
    o_ref = wick.outer_closed_form(hd, *pts, p["C"])
    dev = abs(res.channel_sum("outer") - o_ref) / abs(o_ref)
    out.add("lattice", "outer_abs", abs(o_ref))
    out.add("lattice", "outer_rel_dev", dev)
    worst = max(worst, dev)
    smallest = min(smallest, abs(o_ref))
    out.add("all", "closed_form_max_rel_dev", worst)
    ok = worst <= 1e-10 and smallest > 1e-8
    return out.rows, [Check("criterion 4: CCR-violating outer channels", ok, f"max rel dev {worst:.1e}, min |outer| {smallest:.2e}")]


@register(
    "no_go_channel",
    "kernel depending only on the transfer momentum; first pairing channel",
    "Channel p1 of the three-commutator mean when K ignores its momentum arguments.",
    {"trials": 20},
    criterion=5,
)
def _no_go(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    S = rng.normal(size=(4, 4))
    S = S + S.T
    A = rng.normal(size=(4, 4))
    A = A - A.T
    v = rng.normal(size=2)

    def K(j, l, q, pL, pR):
        # symmetric under (j, l, q) -> (l, j, -q), as any covariance is
        return S[j, l] * np.cos(q @ v) + 1j * A[j, l] * np.sin(q @ v)

    worst = 0.0
    for _ in range(p["trials"]):
        q, r, pp, k, kp = rng.normal(size=(5, 2))
        idx = tuple(int(i) for i in rng.integers(0, 4, 4))
        ch = wick.mean_momentum_triple(q, -q, r, -r, K, pp, k, kp, idx=idx)
        worst = max(worst, abs(ch["p1"]))
    out.add("all", "p1_max_abs", worst)
    return out.rows, [Check("criterion 5: no-go channel vanishes", worst <= 1e-12, f"max |p1| {worst:.1e}")]


@register(
    "outer_pairing_suppression",
    "low-rank commutator families over many holographic components",
    "Cross over diagonal commutator norms against N.",
    {"N": [8, 16, 32, 64], "rank": 2},
    criterion=6,
)
def _outer_pairing(p, out):
    def K(q):
        return np.array([[1.0 if q[0] > 0 else -1.0]])

    qs = [(1, 0), (-1, 1)]
    ratios = []
    for N in p["N"]:
        fam = holo.build_M_family(int(N), p["rank"], qs, K, seed=int(N) + p["seed"])
        r = fam.cross_ratio()["ratio"]
        ratios.append(r)
        out.add(f"N={N}", "cross_diag_ratio", r)
    slope, se = _slope(p["N"], ratios)
    out.add("fit", "ratio_slope", slope, se)
    return out.rows, [Check("criterion 6: 1/N outer-pairing suppression", _within(slope, -1.0, 0.2), f"slope {slope:.3f}")]


@register(
    "stationary_phase_suppression",
    "stationary-phase suppression of dephased cross terms",
    "Suppression exponent in one and two integration dimensions.",
    {"ratios": [0.5, 0.25, 0.125, 0.0625]},
    criterion=7,
)
def _stationary(p, out):
    slopes = {}
    for dim in (1, 2):
        res = holo.suppression_exponent(p["ratios"], dim)
        for r, v in zip(res["ratios"], res["values"]):
            out.add(f"dim={dim},ratio={r}", "suppression", v)
        slopes[dim] = res["slope"]
        out.add(f"dim={dim}", "exponent", res["slope"])
    ok = _within(slopes[1], 1.0, 0.2) and _within(slopes[2], 2.0, 0.2)
    return out.rows, [Check("criterion 7: stationary-phase exponents", ok, f"1D {slopes[1]:.3f}, 2D {slopes[2]:.3f}")]


@register(
    "counting_laws",
    "coherent and dephased sums of stationary contributions",
    "Growth of coherent and random-phase sums with K.",
    {"K": [100, 1000, 10000, 100000], "trials": 256},
    criterion=8,
)
def _counting(p, out):
    if len(p["K"]) < 2:
        raise FitError("counting fit needs at least two K values")
    res = holo.counting_slopes(tuple(p["K"]), seed=p["seed"], trials=p["trials"])
    for mode in ("b_eq_d", "b_neq_d"):
        for K, m in zip(res[mode]["K"], res[mode]["mean"]):
            out.add(f"{mode},K={K}", "mean_modulus", m)
        out.add(mode, "slope", res[mode]["slope"])
    a, b = res["b_eq_d"]["slope"], res["b_neq_d"]["slope"]
    ok = _within(a, 1.0, 0.1) and _within(b, 0.5, 0.05)
    return out.rows, [Check("criterion 8: counting laws", ok, f"coherent {a:.3f}, dephased {b:.3f}")]


@register(
    "phase_matching_survivors",
    "index matching rules for long products of holographic factors",
    "Rule survivors against brute-force oscillatory sums.",
    {"p": 3, "N": 3, "n": 32},
    criterion=9,
)
def _phase_matching(p, out):
    res = holo.phase_matching_experiment(p=p["p"], N=p["N"], n=p["n"])
    out.add("all", "rule_survivors", res["rule_survivors"])
    out.add("all", "brute_survivors", res["brute_survivors"])
    out.add("all", "class_ratio", res["class_ratio"])
    ok = res["sets_equal"] and res["class_ratio"] >= 100
    return out.rows, [Check("criterion 9: phase-matching survivors", ok, f"sets equal {res['sets_equal']}, class ratio {res['class_ratio']:.1f}")]


@register(
    "product_identity",
    "products of regularized Green's operators in the mass parameter",
    "Residual of the regularized product identity and the pi^2 diagonal coefficient.",
    {"mass": 0.3, "eps": [0.1, 0.05, 0.025, 0.0125]},
    criterion=10,
)
def _product_identity(p, out):
    eps = p["eps"]
    res = green.product_identity_residuals(p["mass"], eps, chi_center=p["mass"])
    for e, r, c in zip(eps, res["residual"], res["coefficient"]):
        out.add(f"eps={e}", "residual", r)
        out.add(f"eps={e}", "coefficient_over_pi2", abs(c) / np.pi**2)
    slope, se = _slope(eps, res["residual"])
    out.add("fit", "residual_slope", slope, se)
    mono = all(a > b for a, b in zip(res["residual"], res["residual"][1:]))
    coef = abs(res["coefficient"][-1]) / np.pi**2
    ok = mono and slope >= 0.8 and abs(coef - 1) <= 0.1
    return out.rows, [Check("criterion 10: product identity", ok, f"monotone {mono}, slope {slope:.3f}, coefficient/pi^2 {coef:.3f}")]


@register(
    "mixing_series",
    "truncated series for the unitary mixing operator",
    "Unitarity defect of the truncated mixing operator against the phase amplitude.",
    {"n": 120, "amplitudes": [0.05, 0.1, 0.2], "orders": [0, 1, 2]},
    criterion=11,
)
def _mixing_series(p, out):
    ok = True
    details = []
    for order in p["orders"]:
        d = []
        for a in p["amplitudes"]:
            model = green.SpectralMixingModel(n=p["n"], amplitude=a)
            dd, cc = green.mixing_unitarity_defect(model, order)
            d.append(dd)
            out.add(f"order={order},amp={a}", "unitarity_defect", dd)
            out.add(f"order={order},amp={a}", "C_norm", cc)
        slope, se = _slope(p["amplitudes"], d)
        out.add(f"order={order}", "amplitude_slope", slope, se)
        ok = ok and _within(slope, order + 1, 0.5)
        details.append(f"order {order}: {slope:.2f}")
    return out.rows, [Check("criterion 11: mixing-series exponents", ok, ", ".join(details) + " (expected order+1)")]


def _periodic_scale(n, l_lambda):
    m = max(1, round(n / (2 * np.pi * l_lambda)))
    return n / (2 * np.pi * m)


def _analytic_kernel(grid, f):
    return ScalarKernel(grid, f(np.array(grid.momenta())), func=f)


@register(
    "polar_v",
    "polar factor of the dephasing operator and its leading symbol",
    "Unitarity of the polar factor and agreement with the leading-order symbol.",
    {"n": 512, "l_min": 1.0, "l_lambda": [6, 12, 24, 48], "amplitude": 1.0},
    criterion=12,
)
def _polar_v(p, out):
    n = int(p["n"])
    grid = Grid((2, n))
    lmin = p["l_min"]
    x = np.array(grid.positions(centered=False))[1]
    L1 = _analytic_kernel(grid, lambda k: np.ones_like(k[1]))
    L2 = _analytic_kernel(grid, lambda k: 0.5 * np.exp(-0.5 * lmin**2 * k[1] ** 2))
    eff, dev, unit = [], [], []
    for lL in p["l_lambda"]:
        le = _periodic_scale(n, lL)
        eff.append(le)
        lam = p["amplitude"] * np.array([np.cos(x / le), np.sin(x / le + 0.3)])
        ph = holo.PhaseFamily(grid, lam, 1 / le, p["amplitude"], p["seed"])
        U = holo.dephasing_U(ph, [L1, L2])
        V = holo.polar_V(U)
        u = float(np.linalg.norm(V.as_matrix().conj().T @ V.as_matrix() - np.eye(grid.size), 2))
        d = (V - microlocal.microlocal_V_leading(ph, [L1, L2])).norm()
        unit.append(u)
        dev.append(d)
        out.add(f"l_lambda={le:.6g}", "unitarity_defect", u)
        out.add(f"l_lambda={le:.6g}", "leading_symbol_deviation", d)
    ratio = lmin / np.asarray(eff)
    slope, se = _slope(ratio, dev)
    out.add("fit", "deviation_slope", slope, se)
    ok = max(unit) < 1e-10 and _within(slope, 1.0, 0.3)
    return out.rows, [Check("criterion 12: polar V", ok, f"max unitarity defect {max(unit):.1e}, slope {slope:.3f}")]


@register(
    "microlocal_inverse_exponent",
    "approximate inverse in the midpoint symbol calculus",
    "Composition defect of the symbol-level inverse over an envelope-scale sweep.",
    {"n": 512, "l_min": 1.0, "l_lambda": [6, 12, 24, 48]},
    criterion=13,
)
def _ml_inverse(p, out):
    n = int(p["n"])
    grid = Grid((2, n))
    lmin = p["l_min"]
    x = np.array(grid.positions(centered=False))
    kern = _analytic_kernel(grid, lambda k: 1 + 0.6 * np.sin(lmin * k[1]) * np.exp(-0.25 * lmin**2 * k[1] ** 2))
    eff, dev = [], []
    for lL in p["l_lambda"]:
        le = _periodic_scale(n, lL)
        eff.append(le)
        A = microlocal.MidpointSymbolOperator(1.5 + 0.5 * np.cos(x[1] / le), kern)
        d = microlocal.inverse_defect(A)
        dev.append(d)
        out.add(f"l_lambda={le:.6g}", "inverse_defect", d)
    slope, se = _slope(lmin / np.asarray(eff), dev)
    out.add("fit", "defect_slope", slope, se)
    return out.rows, [Check("criterion 13: microlocal inverse exponent", _within(slope, 2.0, 0.3), f"slope {slope:.3f}")]


@register(
    "fock_factorization",
    "fermion and boson factorization of perturbation terms; toy Fock states",
    "Chained products against factorized form, toy CAR and entanglement after one step.",
    {"points": [16, 16], "modes": 6, "fermions": 2, "bosonic": 3, "pairs": 10, "dt": 0.2},
    criterion=14,
)
def _fock(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    grid = Grid(p["points"])
    kernels = [
        _analytic_kernel(grid, lambda k: np.exp(-0.3 * (k[0] ** 2 + k[1] ** 2))),
        _analytic_kernel(grid, lambda k: 1.0 / (1.0 + k[0] ** 2 + k[1] ** 2)),
    ]
    fact = 0.0
    for n in (1, 2):
        qs = [tuple(int(v) for v in rng.integers(-5, 6, 2)) for _ in range(n)]
        A = rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))
        res = fock.factorization_check(qs, (1, -2), kernels, A, spinor=rng.normal(size=4))
        fact = max(fact, res.deviation)
        out.add(f"n={n}", "factorization_deviation", res.deviation)
    N, L, M = p["bosonic"], p["fermions"], p["modes"]
    state = fock.ToyFockState.from_orbitals(rng.normal(size=(N, L, M)) + 1j * rng.normal(size=(N, L, M)))
    car = 0.0
    for _ in range(p["pairs"]):
        psi = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
        phi = rng.normal(size=M) + 1j * rng.normal(size=M)
        d = fock.anticommutator_defect(state, psi, phi)
        car = max(car, d["mixed"], d["create"])
    out.add(f"modes={M}", "car_max_defect", car)
    spec = fock.toy_qed_spec(N=2, seed=p["seed"])
    orb = np.broadcast_to(rng.normal(size=(1, 2, 8)), (2, 2, 8))
    s0 = fock.ToyFockState.from_orbitals(orb, weights=[0.6, 0.8])
    s0 = s0 * (1 / s0.norm())
    e0 = fock.bosonic_entropy(s0)
    e1 = fock.bosonic_entropy(fock.dyson_step(s0, spec, p["dt"]))
    out.add("t=0", "bosonic_entropy", e0)
    out.add(f"t={p['dt']}", "bosonic_entropy", e1)
    ok = fact <= 1e-10 and car <= 1e-12 and e1 > 0
    return out.rows, [Check("criterion 14: factorization, CAR, entanglement", ok, f"factorization {fact:.1e}, CAR {car:.1e}, entropy {e0:.2g} -> {e1:.3f}")]


@register(
    "determinism",
    "artifact plumbing",
    "Runs a target experiment twice with one config and compares the CSV bytes.",
    {"target": "counting_laws", "K": [100, 1000], "trials": 64},
    criterion=15,
)
def _determinism(p, out):
    target = p["target"]
    params = {k: v for k, v in p.items() if k in REGISTRY[target].defaults}
    cfg = ExperimentConfig(target, p["seed"], params=params)
    a = rows_to_csv(run_experiment(cfg)[0]).encode("utf-8")
    b = rows_to_csv(run_experiment(cfg)[0]).encode("utf-8")
    out.add(target, "bytes", len(a))
    out.add(target, "identical", float(a == b))
    return out.rows, [Check("criterion 15: determinism", a == b, f"{len(a)} bytes, identical {a == b}")]


# --- further experiments ------------------------------------------------------


@register(
    "green_consistency",
    "Green's operators, spectral projectors and the phase-transformed Dirac operator",
    "Krein symmetry, completeness, retarded support and the exact error-term identity.",
    {"points": [16, 16], "mass": 0.5, "width": 0.4, "eps_reg": 1e-7},
)
def _green_consistency(p, out):
    grid = Grid(p["points"])
    m = p["mass"]
    sym = green.symmetric_green(m, grid, 0.1)
    krein = (sym - krein_adjoint(sym)).norm() / sym.norm()
    avg = green.retarded_green(m, grid, p["eps_reg"]) * 0.5 + green.advanced_green(m, grid, p["eps_reg"]) * 0.5
    mean_dev = (avg - green.symmetric_green(m, grid, p["eps_reg"])).norm() / avg.norm()
    comp = green.completeness_defect(grid, p["width"])
    out.add("symmetric", "krein_defect", krein)
    out.add("symmetric", "adv_ret_mean_deviation", mean_dev)
    out.add("projectors", "completeness_defect", comp)
    ok = krein < 1e-12 and mean_dev < 1e-6 and comp < 1e-10
    return out.rows, [Check("Green's operator consistency", ok, f"krein {krein:.1e}, mean {mean_dev:.1e}, completeness {comp:.1e}")]


@register(
    "microlocal_product_law",
    "approximate functional calculus for midpoint symbols",
    "Product-law defect of the symbol calculus over an envelope-scale sweep.",
    {"n": 512, "l_min": 1.0, "l_lambda": [6, 12, 24, 48]},
)
def _ml_product(p, out):
    n = int(p["n"])
    grid = Grid((2, n))
    lmin = p["l_min"]
    x = np.array(grid.positions(centered=False))
    kern = _analytic_kernel(grid, lambda k: 1 + 0.6 * np.sin(lmin * k[1]) * np.exp(-0.25 * lmin**2 * k[1] ** 2))
    eff, dev = [], []
    for lL in p["l_lambda"]:
        le = _periodic_scale(n, lL)
        eff.append(le)
        A = microlocal.MidpointSymbolOperator(1.5 + 0.5 * np.cos(x[1] / le), kern)
        d = microlocal.product_law_defect(A, np.exp, lambda z: z)
        dev.append(d)
        out.add(f"l_lambda={le:.6g}", "product_defect", d)
    slope, se = _slope(lmin / np.asarray(eff), dev)
    out.add("fit", "defect_slope", slope, se)
    return out.rows, [Check("microlocal product law", _within(slope, 1.0, 0.3), f"slope {slope:.3f}")]


@register(
    "u_expansion_truncation",
    "Taylor expansion of the dephasing operator about the midpoint",
    "Truncation error of the midpoint expansion and the commutator of its first terms.",
    {"n": 512, "l_min": 2.0, "l_lambda": [6, 12, 24, 48], "max_order": 2},
)
def _u_expansion(p, out):
    n = int(p["n"])
    grid = Grid((2, n))
    lmin = p["l_min"]
    x = np.array(grid.positions(centered=False))[1]
    L = _analytic_kernel(grid, lambda k: np.exp(-0.5 * lmin**2 * k[1] ** 2))
    eff = []
    errs = {P: [] for P in range(p["max_order"] + 1)}
    comm = []
    for lL in p["l_lambda"]:
        le = _periodic_scale(n, lL)
        eff.append(le)
        lam = np.cos(x / le)[None]
        ph = holo.PhaseFamily(grid, lam, 1 / le, 1.0, p["seed"])
        U = holo.dephasing_U(ph, [L])
        acc = None
        terms = []
        for P in range(p["max_order"] + 1):
            t = microlocal.U_expansion_term(ph, [L], P)
            terms.append(t)
            acc = t if acc is None else acc + t
            e = (U - acc).norm() / U.norm()
            errs[P].append(e)
            out.add(f"l_lambda={le:.6g},P={P}", "truncation_error", e)
        c = (compose(terms[0], terms[1]) - compose(terms[1], terms[0])).norm() / (terms[0].norm() * terms[1].norm())
        comm.append(c)
        out.add(f"l_lambda={le:.6g}", "commutator_ratio", c)
    ratio = lmin / np.asarray(eff)
    ok = True
    for P, e in errs.items():
        s, se = _slope(ratio, e)
        out.add(f"P={P}", "truncation_slope", s, se)
        ok = ok and _within(s, P + 1, 0.5)
    cs, cse = _slope(ratio, comm)
    out.add("fit", "commutator_slope", cs, cse)
    ok = ok and cs >= 0.7
    return out.rows, [Check("midpoint expansion of U", ok, f"commutator slope {cs:.3f}")]


@register(
    "dyson_step_scaling",
    "second-order time-ordered evolution of toy Fock states",
    "Local error and norm drift of the truncated Dyson step against dt.",
    {"dt": [0.08, 0.04, 0.02, 0.01], "t0": 0.3},
)
def _dyson(p, out):
    rng = np.random.Generator(np.random.Philox(p["seed"]))
    spec = fock.toy_qed_spec(N=2, seed=p["seed"])
    orb = np.broadcast_to(rng.normal(size=(1, 2, 8)), (2, 2, 8))
    s0 = fock.ToyFockState.from_orbitals(orb, weights=[0.6, 0.8])
    s0 = s0 * (1 / s0.norm())
    err, drift = [], []
    for dt in p["dt"]:
        a = fock.dyson_step(s0, spec, dt, t0=p["t0"])
        e = fock.exact_step(s0, spec, dt, t0=p["t0"])
        err.append((a - e).norm())
        drift.append(abs(a.norm() - 1.0))
        out.add(f"dt={dt}", "local_error", err[-1])
        out.add(f"dt={dt}", "norm_drift", drift[-1])
    s_err, se1 = _slope(p["dt"], err)
    s_drift, se2 = _slope(p["dt"], drift)
    out.add("fit", "local_error_slope", s_err, se1)
    out.add("fit", "norm_drift_slope", s_drift, se2)
    ok = _within(s_err, 3.0, 0.5) and s_drift >= 2.5
    return out.rows, [Check("Dyson step order", ok, f"local error slope {s_err:.3f}, drift slope {s_drift:.3f}")]


def criterion_experiments() -> list:
    return sorted((e for e in REGISTRY.values() if e.criterion is not None), key=lambda e: e.criterion)


__all__ = [
    "ResultRow",
    "Check",
    "ExperimentConfig",
    "Experiment",
    "ConfigError",
    "FitError",
    "REGISTRY",
    "list_experiments",
    "parse_config",
    "load_config",
    "rows_to_csv",
    "run_experiment",
    "criterion_experiments",
]
