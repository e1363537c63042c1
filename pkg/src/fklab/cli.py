"""Experiment orchestration: config ingestion, pipelines, persistence.

Each named experiment consumes a JSON config, runs one pipeline, and
writes resolved-config.json, report.json (diagnostics, verdicts, fitted
constants, CIs), and plot-ready whitespace CSV files.  Exit codes:
0 success, 2 scientific assertion failure (the failing invariant is
named), 3 configuration error.  Partial outputs are flushed together
with a FAILED marker file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import discretize as dz
from . import model as md
from . import montecarlo as mc
from . import rates as rt
from . import spectral as sp
from .errors import SlicingInapplicableError

EXPERIMENTS = (
    "spectrum",
    "iuc_dichotomy",
    "ground_state_fit",
    "rates_table",
    "mc_lemmas",
    "chain_bound",
    "valley",
    "inequality_suite",
)

PLOT_KINDS = ("phi1_trace", "envelope_overlay", "iuc_ratio_vs_R", "rate_functions", "mc_scaling")


class ConfigError(ValueError):
    pass


def _check_keys(obj, allowed, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _kernel_from_config(cfg):
    _check_keys(cfg, ("family", "d", "alpha1", "alpha2", "kappa", "gamma", "c1", "c2", "c_tail"), "model.kernel")
    kw = dict(cfg)
    if kw.get("gamma") in (None, "inf"):
        kw["gamma"] = math.inf
    try:
        return md.KernelSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel spec: {exc}") from exc


def _potential_from_config(cfg):
    allowed = ("family", "d", "c", "theta", "theta1", "theta2", "k0", "alpha", "radius_law", "c5", "c6", "eta2", "off_family", "K")
    _check_keys(cfg, allowed, "model.potential")
    kw = dict(cfg)
    if kw.get("K") is None:
        kw.pop("K", None)
    try:
        return md.PotentialSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad potential spec: {exc}") from exc


def _grid_from_config(cfg):
    _check_keys(cfg, ("R", "N"), "grid")
    try:
        return dz.Grid(R=float(cfg.get("R", 10.0)), N=int(cfg.get("N", 401)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def _scheme_from_config(cfg, seed_override=None):
    _check_keys(cfg, ("eps_cut", "dt", "rng_seed", "worker_count"), "scheme")
    kw = dict(cfg)
    if seed_override is not None:
        kw["rng_seed"] = int(seed_override)
    try:
        return mc.SimScheme(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scheme: {exc}") from exc


def load_config(cfg, seed_override=None, experiment_override=None):
    """Validate the raw config dict into resolved spec objects."""
    top = ("experiment", "output_dir", "model", "grid", "scheme", "rates", "experiment_params", "tolerances")
    _check_keys(cfg, top, "top level")
    experiment = experiment_override or cfg.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    model_cfg = cfg.get("model", {})
    _check_keys(model_cfg, ("kernel", "potential"), "model")
    kernel = _kernel_from_config(model_cfg.get("kernel", {"family": "truncated", "alpha1": 1.0, "alpha2": 1.0}))
    potential = _potential_from_config(model_cfg.get("potential", {"family": "power", "theta": 2.0}))
    grid = _grid_from_config(cfg.get("grid", {}))
    scheme = _scheme_from_config(cfg.get("scheme", {}), seed_override)
    rates_cfg = dict(cfg.get("rates", {}))
    _check_keys(rates_cfg, ("epsilon", "delta"), "rates")
    rates_cfg.setdefault("epsilon", 1.0 / 22.0)
    rates_cfg.setdefault("delta", math.e)
    params = dict(cfg.get("experiment_params", {}))
    tolerances = dict(cfg.get("tolerances", {}))
    return {
        "experiment": experiment,
        "output_dir": cfg.get("output_dir", "out"),
        "kernel": kernel,
        "potential": potential,
        "grid": grid,
        "scheme": scheme,
        "rates": rates_cfg,
        "params": params,
        "tolerances": tolerances,
    }


def _resolved_config_dict(resolved):
    out = {
        "experiment": resolved["experiment"],
        "output_dir": resolved["output_dir"],
        "model": {
            "kernel": dataclasses.asdict(resolved["kernel"]),
            "potential": dataclasses.asdict(resolved["potential"]),
        },
        "grid": {"R": resolved["grid"].R, "N": resolved["grid"].N},
        "scheme": dataclasses.asdict(resolved["scheme"]),
        "rates": resolved["rates"],
        "experiment_params": resolved["params"],
        "tolerances": resolved["tolerances"],
    }
    k = out["model"]["kernel"]
    if math.isinf(k["gamma"]):
        k["gamma"] = "inf"
    return out


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _solve(kernel, potential, grid):
    asm = dz.assemble_generator(kernel, potential, grid)
    return asm, sp.solve_spectrum(asm)


def run_spectrum(resolved):
    kernel, potential, grid = resolved["kernel"], resolved["potential"], resolved["grid"]
    asm, spec = _solve(kernel, potential, grid)
    lam1 = spec.lambda1
    gap = float(spec.eigenvalues[1] - spec.eigenvalues[0])
    variational = asm.form_value(spec.ground_state)
    checks = [
        ("lambda1_positive", lam1 > 0.0, f"lambda1={lam1:g}"),
        ("spectral_gap_positive", gap > 0.0, f"gap={gap:g}"),
        ("variational_identity", abs(variational - lam1) <= 1e-6 * lam1, f"form={variational:g}"),
        ("ground_state_positive", bool(np.all(spec.ground_state > 0.0)), "phi1 > 0"),
    ]
    log_phi = sp.ground_state_log_tail(spec)
    xs = grid.nodes
    V = md.eval_potential(potential, xs)
    report = {
        "lambda": [float(v) for v in spec.eigenvalues[:8]],
        "lambda1": lam1,
        "spectral_gap": gap,
        "variational_form_value": variational,
        "checks": checks,
        "plot_data": {
            "phi1_trace": {
                "header": ["x", "phi1", "log_phi1", "V"],
                "rows": [[float(x), float(p), float(lp), float(v)] for x, p, lp, v in zip(xs, spec.ground_state, log_phi, V)],
            }
        },
    }
    if resolved["params"].get("dump_operator"):
        report["operator_file"] = "operator.bin"
    return report, asm


def run_iuc_dichotomy(resolved):
    kernel = resolved["kernel"]
    params = dict(resolved["params"])
    _check_keys(params, ("thetas", "R_list", "t", "h"), "experiment_params")
    thetas = params.get("thetas", [0.5, 2.0])
    R_list = params.get("R_list", [5.0, 10.0, 20.0])
    t = params.get("t", 1.0)
    h = params.get("h", 0.05)
    tol = resolved["tolerances"]
    bounded_factor = tol.get("iuc_bounded_factor", 2.0)
    blowup_factor = tol.get("iuc_blowup_factor", 10.0)
    results = {}
    rows = []
    for theta in thetas:
        lams = []
        for R in R_list:
            N = int(round(2.0 * R / h)) + 1
            if N % 2 == 0:
                N += 1
            grid = dz.Grid(R=float(R), N=N)
            _, spec = _solve(kernel, md.power_potential(theta), grid)
            lam, excluded = sp.iuc_ratio(spec, t)
            lams.append(lam)
            rows.append([float(R), float(t), float(theta), lam, excluded])
        growth = lams[-1] / lams[0]
        if growth < bounded_factor:
            verdict = "iuc_consistent"
        elif growth > blowup_factor:
            verdict = "non_iuc_consistent"
        else:
            verdict = "undecided"
        results[f"theta={theta:g}"] = {"Lambda": lams, "growth": growth, "verdict": verdict}
    report = {
        "t": t,
        "R_list": [float(R) for R in R_list],
        "results": results,
        "checks": [("dichotomy_ran", True, "")],
        "plot_data": {"iuc_ratio_vs_R": {"header": ["R", "t", "theta", "Lambda", "excluded"], "rows": rows}},
    }
    return report, None


def run_ground_state_fit(resolved):
    kernel, potential, grid = resolved["kernel"], resolved["potential"], resolved["grid"]
    params = dict(resolved["params"])
    _check_keys(params, ("b_fixed", "envelope_epsilon"), "experiment_params")
    env_eps = params.get("envelope_epsilon", 0.1)
    asm, spec = _solve(kernel, potential, grid)
    log_phi = sp.ground_state_log_tail(spec)
    xs = grid.nodes
    fit_free = bd.fit_decay(xs, log_phi1=log_phi)
    fit_b1 = bd.fit_decay(xs, log_phi1=log_phi, model="b_fixed", b_fixed=params.get("b_fixed", 1.0))
    report = {
        "lambda1": spec.lambda1,
        "fit_free": dataclasses.asdict(fit_free),
        "fit_b_fixed": dataclasses.asdict(fit_b1),
        "checks": [("fit_ran", True, "")],
        "plot_data": {},
    }
    theta = potential.theta
    if kernel.family == "truncated":
        lower = bd.Envelope(kind="ex12_gamma_inf", theta=theta, epsilon=env_eps, side="lower")
        upper = bd.Envelope(kind="ex12_gamma_inf", theta=theta, epsilon=env_eps, side="upper")
    else:
        lower = bd.Envelope(kind="ex12_gamma_finite", theta=theta, gamma=kernel.gamma, side="lower")
        upper = bd.Envelope(kind="ex12_gamma_finite", theta=theta, gamma=kernel.gamma, side="upper")
    sandwich = bd.envelope_sandwich_report(xs, None, lower, upper, log_phi1=log_phi)
    report["sandwich"] = sandwich
    sel = np.isfinite(log_phi)
    report["plot_data"]["envelope_overlay"] = {
        "header": ["x", "neg_log_phi1", "lower_exp", "upper_exp"],
        "rows": [
            [float(x), float(-lp), float(-bd.eval_envelope(lower, x)), float(-bd.eval_envelope(upper, x))]
            for x, lp in zip(xs[sel], log_phi[sel])
        ],
    }
    return report, asm


def run_rates_table(resolved):
    kernel, potential = resolved["kernel"], resolved["potential"]
    eps = resolved["rates"]["epsilon"]
    delta = resolved["rates"]["delta"]
    bundle = rt.build_rate_bundle(kernel, potential, eps, delta=delta)
    include_tilde = potential.family == "valley"
    table = rt.rate_table(bundle, include_tilde=include_tilde)
    grid_pts = [(0.5, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.5, 0.0), (2.0, -1.0)]
    classifier = []
    for t1, t2 in grid_pts:
        closed = rt.power_log_iuc_classification(t1, t2)
        res = rt.iuc_integral_test(rt.power_log_rate_inverse(t1, t2), 100.0)
        classifier.append({"theta1": t1, "theta2": t2, "closed_form_iuc": closed, "numeric": res.verdict})
    report = {
        "s0": bundle.s0,
        "classifier": classifier,
        "checks": [("rates_ran", True, "")],
        "plot_data": {
            "rate_functions": {
                "header": ["s", "beta", "gamma", "beta_hat", "beta_tilde"],
                "rows": [[row["s"], row["beta"], row["gamma"], row["beta_hat"], row["beta_tilde"]] for row in table],
            }
        },
    }
    return report, None


def run_mc_lemmas(resolved):
    kernel, potential, grid, scheme = resolved["kernel"], resolved["potential"], resolved["grid"], resolved["scheme"]
    params = dict(resolved["params"])
    _check_keys(params, ("r_list", "exit_paths", "window_paths", "fk_paths", "t_list"), "experiment_params")
    r_list = params.get("r_list", [0.1, 0.2, 0.4])
    exit_paths = int(params.get("exit_paths", 10000))
    window_paths = int(params.get("window_paths", 100000))
    fk_paths = int(params.get("fk_paths", 100000))
    exit_scheme = mc.SimScheme(eps_cut=0.005, dt=1e-4, rng_seed=scheme.rng_seed, worker_count=scheme.worker_count)
    exits = mc.exit_time_stats(kernel, exit_scheme, r_list, exit_paths)
    eps = 1.0 / 12.0
    T = mc.exit_time_bound(kernel, eps)
    wscheme = mc.SimScheme(eps_cut=0.005, dt=T / 400.0, rng_seed=scheme.rng_seed + 1, worker_count=scheme.worker_count)
    t1, w = T / 8.0, T / 4.0
    win1 = mc.window_exit_prob(kernel, wscheme, 0.0, 2 * eps * kernel.kappa, 0.5, eps * kernel.kappa, t1, t1 + w, window_paths)
    win2 = mc.window_exit_prob(kernel, wscheme, 0.0, 2 * eps * kernel.kappa, 0.5, eps * kernel.kappa, t1, t1 + 2 * w, window_paths)
    ratio = win2["estimate"] / max(win1["estimate"], 1e-300)
    fk_scheme = mc.SimScheme(eps_cut=0.05, dt=5e-3, rng_seed=scheme.rng_seed + 2, worker_count=scheme.worker_count)
    lam_mc = mc.fk_lambda1(kernel, potential, fk_scheme, fk_paths, t_list=params.get("t_list", (2.0, 4.0, 8.0)))
    _, spec = _solve(kernel, potential, grid)
    rel_gap = abs(lam_mc["lambda1"] - spec.lambda1) / spec.lambda1
    slope_ok = abs(exits["slope"] - exits["expected_slope"]) <= 0.2
    collapse_ok = exits["collapse_ratio"] < 2.0
    ratio_ok = 1.5 <= ratio <= 2.5
    lam_ok = rel_gap < 0.10
    report = {
        "exit_times": exits,
        "window": {"w": win1, "2w": win2, "ratio": ratio},
        "lambda1_mc": lam_mc,
        "lambda1_spectral": spec.lambda1,
        "lambda1_rel_gap": rel_gap,
        "checks": [
            ("exit_slope_band", slope_ok, f"slope={exits['slope']:g}"),
            ("exit_collapse", collapse_ok, f"ratio={exits['collapse_ratio']:g}"),
            ("window_linearity", ratio_ok, f"ratio={ratio:g}"),
            ("lambda1_cross_check", lam_ok, f"rel_gap={rel_gap:g}"),
        ],
        "plot_data": {
            "mc_scaling": {
                "header": ["r", "median_exit"],
                "rows": [[float(r), float(v)] for r, v in zip(exits["radii"], exits["medians"])],
            }
        },
    }
    return report, None


def run_chain_bound(resolved):
    kernel, potential, scheme = resolved["kernel"], resolved["potential"], resolved["scheme"]
    params = dict(resolved["params"])
    _check_keys(params, ("epsilon", "x_list", "window_paths"), "experiment_params")
    eps = params.get("epsilon", 1.0 / 12.0)
    x_list = params.get("x_list", [6.0, 9.0, 12.0])
    window_paths = int(params.get("window_paths", 100000))
    T = mc.exit_time_bound(kernel, eps)
    wscheme = mc.SimScheme(eps_cut=0.005, dt=T / 400.0, rng_seed=scheme.rng_seed, worker_count=scheme.worker_count)
    win = mc.window_exit_prob(kernel, wscheme, 0.0, 2 * eps * kernel.kappa, 0.5, eps * kernel.kappa, 0.0, T / 2.0, window_paths)
    C = win["estimate"] / (eps * kernel.kappa ** (-kernel.alpha1) * (T / 2.0))
    bound_rows = []
    for x in x_list:
        plan = mc.ChainPlan(x=float(x), kappa=kernel.kappa, epsilon=eps, exit_exponent=kernel.exit_scaling_exponent)
        res = mc.chain_lower_bound(plan, potential, link_constant=C)
        bound_rows.append({"x": x, "exponent": res["exponent"], "log_product": res["log_product"], "n_links": res["n_links"]})
    xs = np.array([row["x"] for row in bound_rows])
    slope_exp = float(np.polyfit(xs, [-row["exponent"] for row in bound_rows], 1)[0])
    slope_prod = float(np.polyfit(xs, [-row["log_product"] for row in bound_rows], 1)[0])
    ratio = slope_prod / slope_exp
    ok = ratio <= 1.3
    geom_checks = 0
    rng = np.random.default_rng(scheme.rng_seed)
    for _ in range(100):
        e = rng.uniform(0.01, 1.0 / 11.5)
        xr = rng.uniform(1.2, 10.0) * (kernel.kappa * (1 - 5 * e) * (1 - 4 * e) / e)
        plan = mc.ChainPlan(x=xr, kappa=kernel.kappa, epsilon=e, exit_exponent=kernel.exit_scaling_exponent)
        plan.check_geometry()
        geom_checks += 1
    report = {
        "link_constant": C,
        "window_calibration": win,
        "bounds": bound_rows,
        "slope_exponent": slope_exp,
        "slope_product": slope_prod,
        "slope_ratio": ratio,
        "geometry_sweep": geom_checks,
        "checks": [
            ("chain_slope_ratio", ok, f"ratio={ratio:g}"),
            ("chain_geometry_sweep", geom_checks == 100, f"{geom_checks}/100"),
        ],
        "plot_data": {},
    }
    return report, None


def run_valley(resolved):
    kernel, scheme = resolved["kernel"], resolved["scheme"]
    params = dict(resolved["params"])
    _check_keys(params, ("k0", "alpha", "eps", "R_list", "slicing_s", "condition13_k0"), "experiment_params")
    k0 = params.get("k0", 5.0)
    alpha = params.get("alpha", 0.5)
    eps_tail = params.get("eps", 0.5)
    R_list = params.get("R_list", [2.0, 10.0, 100.0, 1000.0])
    pot_power = md.valley_potential(k0=k0, alpha=alpha, theta=2.0)
    tail_rows = []
    for R in R_list:
        exact = md.theta_of_R(pot_power, R)
        oracle = _valley_tail_oracle(pot_power, R)
        rel = abs(exact - oracle) / max(oracle, 1e-300)
        tail_rows.append({"R": R, "theta_exact": exact, "oracle": oracle, "rel_gap": rel})
    tail_ok = all(row["rel_gap"] <= 1e-10 for row in tail_rows)
    bound_report = md.valley_tail_bound_check(pot_power, R_list, eps_tail)
    # slicing: finite n0 on the exp_log family, inapplicable on the power family
    pot_exp = md.valley_potential(radius_law="exp_log", c5=1e-8, c6=8.0, eta2=2.0, off_family="power_log", theta1=1.0, theta2=3.0, c=3.0)
    bundle_exp = rt.build_rate_bundle(kernel, pot_exp, resolved["rates"]["epsilon"], delta=resolved["rates"]["delta"])
    s_val = params.get("slicing_s", 0.5)
    n0s, _, beta_tilde = rt.slicing_schedule(bundle_exp, s_val)
    bundle_pow = rt.build_rate_bundle(kernel, pot_power, resolved["rates"]["epsilon"], delta=resolved["rates"]["delta"])
    try:
        rt.check_slicing_summability(bundle_pow)
        power_rejected = False
    except SlicingInapplicableError:
        power_rejected = True
    # qualitative condition-1.3 probe at reduced k0 (reported, not asserted)
    k0_small = params.get("condition13_k0", 2.0)
    pot_c13 = md.valley_potential(k0=k0_small, alpha=alpha, theta=2.0)
    grid = dz.Grid(R=12.0, N=481)
    _, spec = _solve(kernel, pot_c13, grid)
    centers = [pot_c13.valley_center(1), pot_c13.valley_center(2)]
    c13 = [sp.condition13_ratio(spec, 1.0, c) for c in centers]
    report = {
        "tail_rows": tail_rows,
        "tail_bound": bound_report,
        "slicing": {"s": s_val, "n0": n0s, "beta_tilde": beta_tilde, "power_family_rejected": power_rejected},
        "condition13": {"centers": centers, "ratios": c13},
        "checks": [
            ("theta_tail_oracle", tail_ok, f"max rel gap {max(r['rel_gap'] for r in tail_rows):.2e}"),
            ("tail_bound_bounded", bool(bound_report["bounded"]), f"c0={bound_report['c0']:g}"),
            ("slicing_finite_n0", n0s > 0 and math.isfinite(beta_tilde) or beta_tilde == math.inf, f"n0={n0s}"),
            ("slicing_rejects_power_tail", power_rejected, ""),
        ],
        "plot_data": {},
    }
    return report, None


def _valley_tail_oracle(pot, R):
    """Independent tail oracle: clipped partial sums of the explicit ball
    list plus an Euler-Maclaurin remainder for the power radius law."""
    q = pot.k0 / pot.alpha - 1.0 / pot.d
    total = 0.0
    m = 1
    while True:
        c, r = pot.valley_center(m), pot.valley_radius(m)
        if c - r >= R:
            total += 2.0 * r  # whole ball; avoids (c+r)-(c-r) cancellation
        elif c + r > R:
            total += (c + r) - R
        m += 1
        rem_bound = 2.0 * m ** (1.0 - q) / (q - 1.0)
        if pot.valley_center(m) - pot.valley_radius(m) > R and rem_bound < 1e-12 * max(total, 1e-300):
            break
        if m > 10**6:
            break
    # Euler-Maclaurin head of sum(2 m^-q, m >= m0)
    total += 2.0 * (m ** (1.0 - q) / (q - 1.0) + 0.5 * m ** (-q) + (q / 12.0) * m ** (-q - 1.0))
    return total


def run_inequality_suite(resolved):
    kernel, potential, grid = resolved["kernel"], resolved["potential"], resolved["grid"]
    params = dict(resolved["params"])
    _check_keys(params, ("n_functions", "seed"), "experiment_params")
    n_funcs = int(params.get("n_functions", 200))
    seed = int(params.get("seed", resolved["scheme"].rng_seed))
    rng = np.random.default_rng(seed)
    xs = grid.nodes
    viol = 0
    total = 0
    pairs = [(r, s) for r in (1.0, 2.0, 4.0) for s in (0.25, 0.5, 1.0)]
    for _ in range(n_funcs):
        knots = np.linspace(-grid.R, grid.R, 21)
        f = np.interp(xs, knots, rng.normal(size=knots.size))
        for r, s in pairs:
            lhs, rhs = dz.local_sp_explicit_check(grid, kernel, f, r, s)
            total += 1
            viol += lhs > rhs
    rrr = mc.rrr1_check([0.0, 1.0, 10.0, 100.0, 1000.0])
    # Sobolev: calibrate on one suite, assert on a fresh one
    cal = _smooth_suite(rng, xs, 100)
    ratios = []
    for f in cal:
        lhs, rhs = dz.sobolev_check(grid, kernel, f)
        if rhs > 0:
            ratios.append(lhs / rhs)
    c0 = 2.0 * max(ratios)
    fresh = _smooth_suite(rng, xs, 100)
    sob_viol = sum(1 for f in fresh if (lambda lr: lr[0] > c0 * lr[1])(dz.sobolev_check(grid, kernel, f)))
    report = {
        "local_sp": {"violations": int(viol), "evaluations": total},
        "rrr1": rrr,
        "sobolev_constant": c0,
        "sobolev_violations": sob_viol,
        "checks": [
            ("local_sp_zero_violations", viol == 0, f"{viol}/{total}"),
            ("rrr1_holds", rrr["all_hold"], ""),
            ("sobolev_frozen_constant", sob_viol == 0, f"c0={c0:g}"),
        ],
        "plot_data": {},
    }
    return report, None


def _smooth_suite(rng, xs, count):
    out = []
    R = float(np.max(np.abs(xs)))
    for _ in range(count):
        k = rng.integers(1, 5)
        f = np.zeros_like(xs)
        for _ in range(k):
            center = rng.uniform(-0.6 * R, 0.6 * R)
            width = rng.uniform(0.5, 3.0)
            f += rng.normal() * np.exp(-((xs - center) ** 2) / (2 * width**2))
        out.append(f)
    return out


PIPELINES = {
    "spectrum": run_spectrum,
    "iuc_dichotomy": run_iuc_dichotomy,
    "ground_state_fit": run_ground_state_fit,
    "rates_table": run_rates_table,
    "mc_lemmas": run_mc_lemmas,
    "chain_bound": run_chain_bound,
    "valley": run_valley,
    "inequality_suite": run_inequality_suite,
}


def emit_plot_data(report, kind, out_dir):
    """Write one plot-ready whitespace CSV for a known kind."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; known: {PLOT_KINDS}")
    data = report.get("plot_data", {}).get(kind)
    if data is None:
        raise ValueError(f"report holds no data for plot kind {kind!r}")
    path = Path(out_dir) / f"{kind}.csv"
    with open(path, "w") as fh:
        fh.write("# " + " ".join(data["header"]) + "\n")
        for row in data["rows"]:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(f"not serializable: {type(obj)}")


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_experiment(cfg, out_dir=None, seed=None, experiment=None):
    """Run one named pipeline from a raw config dict; returns exit code."""
    try:
        resolved = load_config(cfg, seed_override=seed, experiment_override=experiment)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    out = Path(out_dir or resolved["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved-config.json", "w") as fh:
        json.dump(_sanitize(_resolved_config_dict(resolved)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    try:
        report, asm = PIPELINES[resolved["experiment"]](resolved)
    except Exception as exc:  # scientific pipeline failure
        (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 2
    report["experiment"] = resolved["experiment"]
    report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    failed = [name for name, ok, _ in report.get("checks", []) if not ok]
    report["failed_checks"] = failed
    with open(out / "report.json", "w") as fh:
        json.dump(_sanitize(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for kind in report.get("plot_data", {}):
        emit_plot_data(report, kind, out)
    if asm is not None and resolved["params"].get("dump_operator"):
        dz.save_assembly(out / "operator.bin", asm)
    if failed:
        (out / "FAILED").write_text("failed checks: " + ", ".join(failed) + "\n")
        print(f"scientific failure: {failed[0]}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="fklab", description="Feynman-Kac jump-process laboratory")
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed override")
    parser.add_argument("--experiment", default=None, help="experiment name override")
    parser.add_argument("--threads", type=int, default=None, help="worker count override")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    if args.threads is not None:
        cfg.setdefault("scheme", {})["worker_count"] = args.threads
    return run_experiment(cfg, out_dir=args.out, seed=args.seed, experiment=args.experiment)


if __name__ == "__main__":
    sys.exit(main())
