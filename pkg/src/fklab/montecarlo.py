"""Jump-process Monte Carlo and the probabilistic cross-checks.

Paths of the translation-invariant kernels are simulated by compound
Poisson jumps above a cutoff eps plus a Brownian motion matching the
variance rate of the suppressed small jumps, stepped on a uniform dt
grid (jump counts per step are Poisson, so total counts stay exactly
Poisson).  The Feynman-Kac weight exp(-integral V) is accumulated by the
trapezoid rule on the same grid.

Workers are independent deterministic substreams spawned from the seed;
estimates are bit-for-bit reproducible for a fixed (seed, worker_count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaincc, gammainccinv

from .errors import GeometryError
from .model import eval_potential, exp_power_tail, sup_potential, sup_potential_interval

EXIT_COEFFICIENT = 0.1  # c0 convention for the exit-time scale
CHAIN_EPS_LIMIT = 1.0 / 11.0


@dataclass(frozen=True)
class SimScheme:
    """Simulation parameters: jump cutoff, dt grid, seed, worker count."""

    eps_cut: float = 1e-3
    dt: float = 1e-4
    rng_seed: int = 12345
    worker_count: int = 4

    def __post_init__(self):
        if self.eps_cut <= 0.0 or self.dt <= 0.0:
            raise ValueError("eps_cut and dt must be positive")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")

    def jump_rate(self, kernel):
        """lambda_eps = integral(rho(z), |z| > eps)."""
        return 2.0 * kernel.one_sided_tail_mass(self.eps_cut)

    def small_jump_variance_rate(self, kernel):
        """sigma_eps^2 = integral(z^2 rho(z), |z| <= eps)."""
        return kernel.truncated_second_moment(self.eps_cut)


@dataclass(eq=False)
class PathSample:
    """A batch of terminal path data (arrays indexed by path)."""

    terminal: np.ndarray
    int_potential: np.ndarray
    jump_count: np.ndarray
    t: float
    seed: int
    worker_count: int
    snapshots: dict = field(default_factory=dict)

    @property
    def count(self):
        return self.terminal.size

    def fk_weights(self, f=None):
        w = np.exp(-self.int_potential)
        if f is not None:
            w = w * f(self.terminal)
        return w


def _worker_counts(total, workers):
    base, rem = divmod(total, workers)
    return [base + (1 if w < rem else 0) for w in range(workers)]


def _worker_rngs(seed, workers):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(workers)]


def _jump_sampler(kernel, eps):
    """Sampler for |Z| > eps under the normalized Levy density."""
    if not kernel.translation_invariant:
        raise ValueError("Monte Carlo supports the translation-invariant families only")
    al = kernel.alpha1
    c = kernel.c1
    if kernel.family == "stable_like":
        def draw(rng, n):
            u = rng.random(n)
            z = eps * u ** (-1.0 / al)
            return z * rng.choice((-1.0, 1.0), size=n)

        return draw
    core_mass = c * (eps ** (-al) - kernel.kappa ** (-al)) / al if eps < kernel.kappa else 0.0
    tail_mass = 0.0
    if kernel.family == "tempered":
        tail_mass = kernel.c_tail * exp_power_tail(kernel.kappa, kernel.gamma)
    total = core_mass + tail_mass
    if total <= 0.0:
        raise ValueError("cutoff eps leaves no jump mass")
    g = kernel.gamma
    kap = kernel.kappa

    def draw(rng, n):
        z = np.empty(n)
        from_tail = rng.random(n) < tail_mass / total
        n_core = int(np.sum(~from_tail))
        if n_core:
            u = rng.random(n_core)
            z[~from_tail] = (eps ** (-al) + u * (kap ** (-al) - eps ** (-al))) ** (-1.0 / al)
        n_tail = n - n_core
        if n_tail:
            q0 = gammaincc(1.0 / g, kap**g)
            u = rng.random(n_tail)
            z[from_tail] = gammainccinv(1.0 / g, u * q0) ** (1.0 / g)
        return z * rng.choice((-1.0, 1.0), size=n)

    return draw


def simulate_paths(kernel, scheme, x0, t, count, potential=None, snapshot_times=()):
    """Simulate FK path data to time t from x0.

    Returns a PathSample with terminal positions, the integrated
    potential, and jump counts; optional snapshot_times record the
    (position, integrated potential) state at intermediate times.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    lam = scheme.jump_rate(kernel)
    sig2 = scheme.small_jump_variance_rate(kernel)
    draw = _jump_sampler(kernel, scheme.eps_cut)
    steps = max(1, math.ceil(t / scheme.dt))
    dt = t / steps
    snap_steps = {max(1, min(steps, round(ts / dt))): ts for ts in snapshot_times}
    v_of = (lambda x: np.asarray(eval_potential(potential, x), dtype=float)) if potential is not None else (lambda x: np.zeros_like(x))

    term, intv, jc = [], [], []
    snaps = {ts: [] for ts in snapshot_times}
    for rng, n in zip(_worker_rngs(scheme.rng_seed, scheme.worker_count), _worker_counts(count, scheme.worker_count)):
        if n == 0:
            continue
        X = np.full(n, float(x0))
        iv = np.zeros(n)
        counts = np.zeros(n, dtype=np.int64)
        v_prev = v_of(X)
        sd = math.sqrt(sig2 * dt)
        for k in range(1, steps + 1):
            P = rng.poisson(lam * dt, n)
            incr = sd * rng.standard_normal(n)
            tot = int(P.sum())
            if tot:
                sizes = draw(rng, tot)
                incr += np.bincount(np.repeat(np.arange(n), P), weights=sizes, minlength=n)
            X = X + incr
            counts += P
            v_new = v_of(X)
            iv += 0.5 * (v_prev + v_new) * dt
            v_prev = v_new
            if k in snap_steps:
                snaps[snap_steps[k]].append((X.copy(), iv.copy()))
        term.append(X)
        intv.append(iv)
        jc.append(counts)
    sample = PathSample(
        terminal=np.concatenate(term),
        int_potential=np.concatenate(intv),
        jump_count=np.concatenate(jc),
        t=t,
        seed=scheme.rng_seed,
        worker_count=scheme.worker_count,
    )
    for ts, parts in snaps.items():
        sample.snapshots[ts] = (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    return sample


def first_exit(kernel, scheme, x0, radius, horizon, count, center=None):
    """First exit times and positions from B(center, radius), started at x0.

    Exits are detected on the dt grid (no bridge correction); paths that
    never leave within the horizon report time +inf.
    """
    if center is None:
        center = x0
    lam = scheme.jump_rate(kernel)
    sig2 = scheme.small_jump_variance_rate(kernel)
    draw = _jump_sampler(kernel, scheme.eps_cut)
    steps = max(1, math.ceil(horizon / scheme.dt))
    dt = horizon / steps
    times, positions = [], []
    for rng, n in zip(_worker_rngs(scheme.rng_seed, scheme.worker_count), _worker_counts(count, scheme.worker_count)):
        if n == 0:
            continue
        X = np.full(n, float(x0))
        tau = np.full(n, np.inf)
        pos = np.full(n, np.nan)
        alive = np.arange(n)
        sd = math.sqrt(sig2 * dt)
        for k in range(1, steps + 1):
            na = alive.size
            if na == 0:
                break
            P = rng.poisson(lam * dt, na)
            incr = sd * rng.standard_normal(na)
            tot = int(P.sum())
            if tot:
                sizes = draw(rng, tot)
                incr += np.bincount(np.repeat(np.arange(na), P), weights=sizes, minlength=na)
            X[alive] = X[alive] + incr
            out = np.abs(X[alive] - center) > radius
            if np.any(out):
                exited = alive[out]
                tau[exited] = k * dt
                pos[exited] = X[exited]
                alive = alive[~out]
        times.append(tau)
        positions.append(pos)
    return np.concatenate(times), np.concatenate(positions)


def exit_time_stats(kernel, scheme, r_list, path_count, horizon=None, max_retries=3):
    """Median exit times per radius and the scaling fit.

    Fits log(median) against log(r); the slope estimates the exit-time
    scaling exponent (alpha for a pure stable kernel).  The horizon is
    extended and the run retried while fewer than 55% of paths exit.
    """
    if path_count < 10**4:
        raise ValueError("exit-time statistics need at least 1e4 paths")
    medians = []
    expo = kernel.exit_scaling_exponent
    for r in r_list:
        if not (0.0 < r <= kernel.kappa / 2.0):
            raise ValueError(f"radius {r} outside (0, kappa/2]")
        hz = horizon if horizon is not None else 40.0 * EXIT_COEFFICIENT * r**expo
        for attempt in range(max_retries + 1):
            times, _ = first_exit(kernel, scheme, 0.0, r, hz, path_count)
            if np.mean(np.isfinite(times)) >= 0.55:
                break
            hz *= 4.0
        else:
            raise RuntimeError(f"insufficient exits within horizon for r={r}")
        medians.append(float(np.median(times)))
    slope = float(np.polyfit(np.log(r_list), np.log(medians), 1)[0])
    collapse = np.asarray(medians) / np.asarray(r_list, dtype=float) ** expo
    return {
        "radii": list(r_list),
        "medians": medians,
        "slope": slope,
        "expected_slope": expo,
        "collapse_ratio": float(collapse.max() / collapse.min()),
        "seed": scheme.rng_seed,
        "paths": path_count,
    }


def wilson_interval(hits, total, z=1.96):
    """Wilson 95% score interval for a binomial proportion."""
    if total <= 0:
        raise ValueError("total must be positive")
    p = hits / total
    denom = 1.0 + z**2 / total
    mid = (p + z**2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z**2 / (4 * total**2)) / denom
    return max(0.0, mid - half), min(1.0, mid + half)


def exit_time_bound(kernel, eps):
    """T(kappa, eps) = c0 (eps kappa)^(exit scaling exponent)."""
    return EXIT_COEFFICIENT * (eps * kernel.kappa) ** kernel.exit_scaling_exponent


def window_exit_prob(kernel, scheme, B_center, B_radius, D_center, D_radius, t1, t2, path_count, strict=True):
    """P(X at exit of B lies in D, exit time in [t1, t2)), with Wilson CI.

    strict=True enforces the window-exit geometry: eps := D_radius/kappa,
    B contains a ball of radius eps kappa, dist(B, D) > eps kappa, all
    pairwise distances <= kappa, and 0 <= t1 <= t2 <= T(kappa, eps).
    strict=False only requires disjointness (used e.g. to confirm that an
    out-of-range target is unreachable for a finite-range kernel).
    """
    gap = abs(B_center - D_center) - B_radius - D_radius
    if gap <= 0.0:
        raise GeometryError("B and D must be disjoint")
    eps = D_radius / kernel.kappa
    if strict:
        if B_radius < eps * kernel.kappa:
            raise GeometryError("B must contain a ball of radius eps*kappa")
        if gap <= eps * kernel.kappa:
            raise GeometryError(f"dist(B, D) = {gap:g} must exceed eps*kappa = {eps * kernel.kappa:g}")
        span = abs(B_center - D_center) + B_radius + D_radius
        if span > kernel.kappa:
            raise GeometryError(f"pairwise distances reach {span:g} > kappa = {kernel.kappa:g}")
        bound = exit_time_bound(kernel, eps)
        if not (0.0 <= t1 <= t2 <= bound):
            raise GeometryError(f"need 0 <= t1 <= t2 <= T(kappa,eps) = {bound:g}")
    if t2 < t1:
        raise ValueError("need t1 <= t2")
    times, pos = first_exit(kernel, scheme, B_center, B_radius, t2, path_count)
    hits = int(np.sum((times >= t1) & (times < t2) & (np.abs(pos - D_center) <= D_radius)))
    lo, hi = wilson_interval(hits, path_count)
    return {
        "estimate": hits / path_count,
        "ci_low": lo,
        "ci_high": hi,
        "hits": hits,
        "paths": path_count,
        "seed": scheme.rng_seed,
    }


def fk_estimate(kernel, potential, scheme, x0, t, f_spec, path_count):
    """Mean of exp(-integral V) f(X_t) with a normal-approximation CI.

    f_spec is ("const",) for f = 1 or ("ball", center, radius) for an
    indicator.
    """
    sample = simulate_paths(kernel, scheme, x0, t, path_count, potential=potential)
    if f_spec[0] == "const":
        f = None
    elif f_spec[0] == "ball":
        _, c, r = f_spec
        f = lambda x: (np.abs(x - c) <= r).astype(float)
    else:
        raise ValueError(f"unknown f_spec {f_spec!r}")
    w = sample.fk_weights(f)
    est = float(np.mean(w))
    half = 1.96 * float(np.std(w)) / math.sqrt(w.size)
    return {
        "estimate": est,
        "ci_low": est - half,
        "ci_high": est + half,
        "paths": path_count,
        "seed": scheme.rng_seed,
        "t": t,
    }


def fk_lambda1(kernel, potential, scheme, path_count, t_list=(2.0, 4.0, 8.0), x0=0.0):
    """Ground-state eigenvalue from the decay slope of -log E[e^{-int V}]."""
    t_list = sorted(t_list)
    sample = simulate_paths(kernel, scheme, x0, t_list[-1], path_count, potential=potential, snapshot_times=t_list[:-1])
    means = {}
    for ts in t_list[:-1]:
        _, iv = sample.snapshots[ts]
        means[ts] = float(np.mean(np.exp(-iv)))
    means[t_list[-1]] = float(np.mean(np.exp(-sample.int_potential)))
    ts = np.array(t_list)
    logs = -np.log(np.array([means[t] for t in t_list]))
    slope = float(np.polyfit(ts, logs, 1)[0])
    return {"lambda1": slope, "means": means, "paths": path_count, "seed": scheme.rng_seed}


# ---------------------------------------------------------------------------
# Ball-chain machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainPlan:
    """Geometry of the ball chain from the origin to a far point x.

    n = floor(|x| / ((1-4 eps) kappa)) + 1 links, centers x_i = i x / n,
    wide balls of radius 2 eps kappa, target balls of radius eps kappa,
    and the hop time t0 = c0 (eps kappa)^(exit scaling exponent).
    Requires |x| > kappa (1-5 eps)(1-4 eps)/eps so that the link count
    bracket holds.
    """

    x: float
    kappa: float
    epsilon: float
    exit_exponent: float
    c0: float = EXIT_COEFFICIENT

    def __post_init__(self):
        if not (0.0 < self.epsilon < CHAIN_EPS_LIMIT):
            raise ValueError(f"epsilon must lie in (0, {CHAIN_EPS_LIMIT:g})")
        if abs(self.x) <= self.validity_threshold:
            raise ValueError(f"|x| must exceed {self.validity_threshold:g} for the chain bracket")

    @property
    def validity_threshold(self):
        e = self.epsilon
        return self.kappa * (1.0 - 5.0 * e) * (1.0 - 4.0 * e) / e

    @property
    def n_links(self):
        return int(math.floor(abs(self.x) / ((1.0 - 4.0 * self.epsilon) * self.kappa))) + 1

    @property
    def centers(self):
        n = self.n_links
        return np.arange(n + 1) * (self.x / n)

    @property
    def wide_radius(self):
        return 2.0 * self.epsilon * self.kappa

    @property
    def target_radius(self):
        return self.epsilon * self.kappa

    @property
    def t0(self):
        return self.c0 * (self.epsilon * self.kappa) ** self.exit_exponent

    def check_geometry(self):
        """Assert the link bracket and the ball separation facts."""
        n = self.n_links
        ax = abs(self.x)
        lo = ax / ((1.0 - 4.0 * self.epsilon) * self.kappa)
        hi = ax / ((1.0 - 5.0 * self.epsilon) * self.kappa)
        if not (lo <= n < hi):
            raise GeometryError(f"link count {n} outside bracket [{lo:g}, {hi:g})")
        step = ax / n
        if not (step - 2.0 * self.wide_radius > 2.0 * self.epsilon * self.kappa):
            raise GeometryError("consecutive wide balls are not separated by 2 eps kappa")
        if not (step + 2.0 * self.wide_radius <= self.kappa):
            raise GeometryError("consecutive wide balls exceed one jump range")
        return True


def chain_lower_bound(plan, potential, link_constant=1.0):
    """Chained lower bound for log T_{t0}^V(1_D)(x), D = B(0, 2 eps kappa).

    Returns the comparison exponent
        exponent = -|x| log(1 + |x| + sup_{|z| <= |x| + 2 eps kappa} V)
                   / ((1-6 eps) kappa)
    (additive constant left symbolic) together with the per-link product
    form sum log(C eps t0 / (kappa^{alpha1} (n + t0 sup_{D_{i-1}} V))),
    with C calibrated from window-exit estimates.
    """
    plan.check_geometry()
    e, kap = plan.epsilon, plan.kappa
    ax = abs(plan.x)
    vsup = sup_potential(potential, ax + 2.0 * e * kap)
    exponent = -ax * math.log(1.0 + ax + vsup) / ((1.0 - 6.0 * e) * kap)
    n = plan.n_links
    t0 = plan.t0
    centers = plan.centers
    per_link = []
    # alpha1 enters through the exit exponent carried by the plan; the
    # kappa^{-alpha1} factor is part of the calibrated constant here.
    for i in range(1, n + 1):
        c_prev = centers[i - 1]
        vmax = sup_potential_interval(potential, c_prev - plan.wide_radius, c_prev + plan.wide_radius)
        per_link.append(math.log(link_constant * e * t0 / (n + t0 * vmax)))
    return {
        "exponent": exponent,
        "log_product": float(np.sum(per_link)),
        "per_link_log": per_link,
        "n_links": n,
        "t0": t0,
        "link_constant": link_constant,
    }


# ---------------------------------------------------------------------------
# Series inequality and distribution checks
# ---------------------------------------------------------------------------


def rrr1_check(r_list, terms=10**6):
    """Verify sum_j exp(-r/j)/(j(j+1)) >= exp(-1)/(r+1) at each r.

    The partial sum is already a lower bound for the series (positive
    terms), so the assertion is rigorous at finite truncation.
    """
    j = np.arange(1, terms + 1, dtype=float)
    base = 1.0 / (j * (j + 1.0))
    rows = []
    for r in r_list:
        if r < 0.0:
            raise ValueError("r must be nonnegative")
        partial = float(np.sum(np.exp(-r / j) * base))
        bound = math.exp(-1.0) / (r + 1.0)
        rows.append({"r": r, "partial_sum": partial, "bound": bound, "holds": partial >= bound})
    return {"rows": rows, "all_hold": all(row["holds"] for row in rows), "terms": terms}


def poisson_count_pvalue(counts, mu):
    """KS p-value of observed jump counts against Poisson(mu).

    The statistic compares the empirical and model CDFs over the integer
    atoms (both evaluated inclusively); the continuous Kolmogorov tail is
    then a conservative p-value for discrete data.
    """
    counts = np.asarray(counts)
    n = counts.size
    ks = np.arange(int(counts.min()), int(counts.max()) + 1)
    emp = np.searchsorted(np.sort(counts), ks, side="right") / n
    model = stats.poisson.cdf(ks, mu)
    D = float(np.max(np.abs(emp - model)))
    from scipy.special import kolmogorov

    return float(kolmogorov(D * math.sqrt(n)))
