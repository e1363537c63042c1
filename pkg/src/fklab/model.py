"""Jump-kernel and potential families and their analytic functionals.

Kernels are symmetric densities J(x, y) that are stable-like of order
alpha at short range (|x-y| <= kappa) and either vanish, decay like
exp(-|z|^gamma), or stay stable-like beyond kappa.  Potentials are
nonnegative confining profiles, including "valley" potentials that are
frozen at 1 on an unbounded union of shrinking balls.

The module also provides the moment functionals L1/L2/L of a kernel, the
confining infimum Phi_K(R) and the low-potential tail measure Theta_K(R)
of a potential, all evaluated analytically where the family permits and
by adaptive quadrature otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc, zeta

KERNEL_FAMILIES = ("stable_like", "truncated", "tempered", "variable_order")
POTENTIAL_FAMILIES = ("power", "power_log", "exp_power", "valley")
VALLEY_RADIUS_LAWS = ("power", "exp_log")

# Quadrature tolerance for moment integrals.
QUAD_TOL = 1e-10


def _upper_gamma(a, x):
    """Upper incomplete gamma integral(u^(a-1) e^-u, u=x..inf)."""
    return gammaincc(a, x) * gamma_fn(a)


def exp_power_tail(a, gamma_exp):
    """integral(exp(-z^gamma), z=a..inf) for a >= 0, gamma > 0."""
    if a < 0:
        raise ValueError("tail integral needs a >= 0")
    return _upper_gamma(1.0 / gamma_exp, a**gamma_exp) / gamma_exp


def _variable_order_exponent(alpha1, alpha2, u):
    """Order a(x, y) = alpha1 + (alpha2-alpha1)(1+sin(x+y))/2 at u = x+y."""
    return alpha1 + (alpha2 - alpha1) * 0.5 * (1.0 + np.sin(u))


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric jump kernel family J(x, y).

    Parameters
    ----------
    family : one of ``stable_like``, ``truncated``, ``tempered``,
        ``variable_order``.
    d : spatial dimension (the lab only exercises d = 1).
    alpha1, alpha2 : stability orders in (0, 2), alpha1 <= alpha2.
    kappa : short-range cutoff radius.
    gamma : tail-tempering exponent in (1, inf]; inf means no tail.
    c1, c2 : lower/upper short-range amplitude constants.
    c_tail : tail amplitude (tempered family only).
    """

    family: str
    alpha1: float
    alpha2: float
    d: int = 1
    kappa: float = 1.0
    gamma: float = math.inf
    c1: float = 1.0
    c2: float = 1.0
    c_tail: float = 0.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError("d must be a positive integer")
        if not (0.0 < self.alpha1 <= self.alpha2 < 2.0):
            raise ValueError("need 0 < alpha1 <= alpha2 < 2")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.c1 <= 0.0 or self.c2 <= 0.0 or self.c1 > self.c2:
            raise ValueError("need 0 < c1 <= c2")
        if self.family in ("stable_like", "truncated", "tempered"):
            if self.alpha1 != self.alpha2:
                raise ValueError(f"{self.family} kernel uses a single order")
            if self.c1 != self.c2:
                raise ValueError(f"{self.family} kernel uses a single amplitude")
        if self.family == "tempered":
            if not (1.0 < self.gamma < math.inf):
                raise ValueError("tempered family needs gamma in (1, inf)")
            if self.c_tail <= 0.0:
                object.__setattr__(self, "c_tail", 1.0)
        else:
            if self.family != "stable_like" and self.c_tail != 0.0:
                raise ValueError(f"{self.family} kernel carries no tail amplitude")
            if self.family in ("truncated", "variable_order"):
                object.__setattr__(self, "gamma", math.inf)
        if self.family == "variable_order" and self.kappa > 1.0:
            # Short-range sandwich constants must absorb the |z| in (1, kappa]
            # band where |z|^(-d-a) leaves [c1 |z|^(-d-a1), c2 |z|^(-d-a2)].
            spread = self.kappa ** (self.alpha2 - self.alpha1)
            object.__setattr__(self, "c1", min(self.c1, 1.0 / spread))
            object.__setattr__(self, "c2", max(self.c2, spread))

    @property
    def alpha(self):
        """Single stability order, defined for the single-order families."""
        if self.alpha1 != self.alpha2:
            raise ValueError("kernel has a genuine order range")
        return self.alpha1

    @property
    def translation_invariant(self):
        return self.family != "variable_order"

    @property
    def exit_scaling_exponent(self):
        """Exit-time scaling alpha2 + (alpha2-alpha1) d / alpha1."""
        return self.alpha2 + (self.alpha2 - self.alpha1) * self.d / self.alpha1

    def levy_density(self, z):
        """Levy density rho(z), translation-invariant families only."""
        if not self.translation_invariant:
            raise ValueError("variable_order kernel is not a Levy kernel")
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        if np.any(az == 0.0):
            raise ValueError("kernel singular on the diagonal")
        core = self.c1 * az ** (-self.d - self.alpha1)
        if self.family == "stable_like":
            return core
        out = np.where(az <= self.kappa, core, 0.0)
        if self.family == "tempered":
            out = out + np.where(az > self.kappa, self.c_tail * np.exp(-(az**self.gamma)), 0.0)
        return out

    def one_sided_tail_mass(self, a):
        """integral(rho(z), z=a..inf) for a > 0 (one side of the line)."""
        if not self.translation_invariant:
            raise ValueError("use quadrature for the variable_order family")
        if a <= 0.0:
            raise ValueError("a must be positive")
        al = self.alpha1
        core_hi = math.inf if self.family == "stable_like" else self.kappa
        mass = 0.0
        if a < core_hi:
            if self.family == "stable_like":
                mass += self.c1 * a ** (-al) / al
            else:
                mass += self.c1 * (a ** (-al) - self.kappa ** (-al)) / al
        if self.family == "tempered":
            mass += self.c_tail * exp_power_tail(max(a, self.kappa), self.gamma)
        return mass

    def truncated_second_moment(self, s):
        """integral(z^2 rho(z), |z|<=s), translation-invariant families."""
        if not self.translation_invariant:
            raise ValueError("use quadrature for the variable_order family")
        if s <= 0.0:
            raise ValueError("s must be positive")
        al = self.alpha1
        lo = min(s, self.kappa) if self.family != "stable_like" else s
        m = 2.0 * self.c1 * lo ** (2.0 - al) / (2.0 - al)
        if self.family == "tempered" and s > self.kappa:
            term = exp_power_tail_second_moment(self.kappa, min(s, math.inf), self.gamma)
            m += 2.0 * self.c_tail * term
        return m


def exp_power_tail_second_moment(a, b, gamma_exp):
    """integral(z^2 exp(-z^gamma), z=a..b)."""
    upper = 0.0 if math.isinf(b) else _upper_gamma(3.0 / gamma_exp, b**gamma_exp)
    return (_upper_gamma(3.0 / gamma_exp, a**gamma_exp) - upper) / gamma_exp


def eval_kernel(spec, x, y):
    """Evaluate J(x, y); symmetric, singular on the diagonal."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.abs(x - y)
    if np.any(r == 0.0):
        raise ValueError("kernel singular on the diagonal (x = y)")
    if spec.translation_invariant:
        return spec.levy_density(x - y)
    a = _variable_order_exponent(spec.alpha1, spec.alpha2, x + y)
    return np.where(r <= spec.kappa, r ** (-spec.d - a), 0.0)


def kernel_moments(spec, s):
    """Moment functionals (L1, L2, L) of the kernel at radius s <= kappa.

    L1(s) = sup_x integral(J(x,y), |y-x|>s),
    L2(s) = sup_x integral(|x-y|^2 J(x,y), |y-x|<=s),
    L(s)  = L1(s) + s^d (s^-2 L2(s))^((d+alpha1)/alpha1).
    """
    if not (0.0 < s <= spec.kappa):
        raise ValueError(f"need 0 < s <= kappa, got s={s}")
    if spec.translation_invariant:
        L1 = 2.0 * spec.one_sided_tail_mass(s)
        L2 = spec.truncated_second_moment(s)
    else:
        L1 = _variable_order_sup(spec, lambda x: _vo_tail_mass(spec, x, s))
        L2 = _variable_order_sup(spec, lambda x: _vo_second_moment(spec, x, s))
    L = L1 + s**spec.d * (L2 / s**2) ** ((spec.d + spec.alpha1) / spec.alpha1)
    return L1, L2, L


def _variable_order_sup(spec, fn, samples=64):
    # a(x, y) depends on x + y only, with period 2 pi; sampling x over one
    # half period covers the attainable range of the integrals.
    xs = np.linspace(0.0, math.pi, samples)
    return max(fn(x) for x in xs)


def _vo_tail_mass(spec, x, s):
    def integrand(z):
        a_p = _variable_order_exponent(spec.alpha1, spec.alpha2, 2 * x + z)
        a_m = _variable_order_exponent(spec.alpha1, spec.alpha2, 2 * x - z)
        return z ** (-1 - a_p) + z ** (-1 - a_m)

    val, _ = integrate.quad(integrand, s, spec.kappa, epsabs=QUAD_TOL, limit=200)
    return val


def _vo_second_moment(spec, x, s):
    def integrand(z):
        a_p = _variable_order_exponent(spec.alpha1, spec.alpha2, 2 * x + z)
        a_m = _variable_order_exponent(spec.alpha1, spec.alpha2, 2 * x - z)
        return z**2 * (z ** (-1 - a_p) + z ** (-1 - a_m))

    val, _ = integrate.quad(integrand, 0.0, s, epsabs=QUAD_TOL, limit=200)
    return val


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """A nonnegative confining potential family.

    Families
    --------
    power      : V = c |x|^theta
    power_log  : V = c |x|^theta1 log^theta2 (1+|x|)
    exp_power  : V = exp(c (1 + |x|^theta))
    valley     : V = 1 on a union of balls B(x_n, r_n) on the positive
                 axis, and the off-valley power/power_log profile elsewhere.
                 Radius laws: ``power`` puts x_n = n^k0,
                 r_n = n^(-k0/alpha + 1/d); ``exp_log`` puts x_n = n,
                 r_n = 0.5 c5 exp(-c6 n log^eta2 n), realising a
                 exp(-c6 R log^eta2 R) tail measure.

    K is the low-potential threshold used by Phi_K and Theta_K; it
    defaults to 1 for the valley family (so the valley is exactly the
    low set) and to the profile value at radius 1 otherwise.
    """

    family: str
    d: int = 1
    c: float = 1.0
    theta: float = 2.0
    theta1: float = 1.0
    theta2: float = 0.0
    # valley geometry
    k0: float = 3.0
    alpha: float = 0.5
    radius_law: str = "power"
    c5: float = 1.0
    c6: float = 1.0
    eta2: float = 0.0
    off_family: str = "power"
    K: float = field(default=math.nan)

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.d != 1 and self.family == "valley":
            raise ValueError("valley potentials are implemented for d = 1")
        if self.family == "valley":
            if self.radius_law not in VALLEY_RADIUS_LAWS:
                raise ValueError(f"unknown valley radius law {self.radius_law!r}")
            if self.off_family not in ("power", "power_log"):
                raise ValueError("off-valley profile must be power or power_log")
            if self.radius_law == "power" and self.k0 / self.alpha - 1.0 / self.d <= 1.0:
                raise ValueError("valley radii are not summable; increase k0")
        if math.isnan(self.K):
            object.__setattr__(self, "K", 1.0 if self.family == "valley" else self.radial_profile(1.0))
        if self.K <= 0.0:
            raise ValueError("K must be positive")
        if self.family == "valley" and self.K < 1.0:
            raise ValueError("valley potentials need K >= 1 so the valley sits in the low set")

    # -- radial profile of the confining part ------------------------------

    def radial_profile(self, r):
        """Off-valley/confining radial profile v(r) at radius r >= 0."""
        r = np.asarray(r, dtype=float)
        fam = self.off_family if self.family == "valley" else self.family
        with np.errstate(over="ignore"):
            if fam == "power":
                return self.c * r**self.theta
            elif fam == "power_log":
                return self.c * r**self.theta1 * np.log1p(r) ** self.theta2
            elif fam == "exp_power":
                return np.exp(self.c * (1.0 + r**self.theta))
        raise ValueError(fam)

    def radial_profile_inverse(self, level):
        """Radius where the (monotone) radial profile reaches ``level``."""
        from .rates import generalized_inverse

        return generalized_inverse(lambda r: float(self.radial_profile(r)), "increasing", level)

    # -- valley geometry ----------------------------------------------------

    def valley_center(self, n):
        if self.radius_law == "power":
            return float(n) ** self.k0
        return float(n)

    def valley_radius(self, n):
        if self.radius_law == "power":
            return float(n) ** (-self.k0 / self.alpha + 1.0 / self.d)
        n = float(n)
        return 0.5 * self.c5 * math.exp(-self.c6 * n * math.log(max(n, 2.0)) ** self.eta2)

    def valley_balls(self, up_to_radius):
        """Intervals [x_n - r_n, x_n + r_n] with left edge <= up_to_radius."""
        balls = []
        n = 1
        while True:
            c, r = self.valley_center(n), self.valley_radius(n)
            if c - r > up_to_radius:
                break
            balls.append((c - r, c + r))
            n += 1
            if n > 10**7:
                raise RuntimeError("valley ball enumeration runaway")
        return balls

    def valley_tail_start(self, R):
        """Smallest n with x_n + r_n > R (first ball not fully below R).

        Centers follow a closed-form law, so the index is located
        analytically and refined locally; may exceed the integer range
        for astronomically large R (returned as float).
        """

        def edge(n):
            return self.valley_center(n) + self.valley_radius(n)

        if edge(1) > R:
            return 1
        if self.radius_law == "power":
            guess = max(1, math.floor(R ** (1.0 / self.k0)) - 2)
        else:
            guess = max(1, math.floor(R) - 2)
        if guess > 1e15:
            return float(guess)
        n = int(guess)
        while edge(n) <= R:
            n += 1
        while n > 1 and edge(n - 1) > R:
            n -= 1
        return n

    def in_valley(self, x):
        """Membership in the ball union A (balls sit on the positive axis)."""
        if self.family != "valley":
            return False
        x = float(x)
        if x < 0.0:
            return False
        for lo, hi in self.valley_balls(x + 1.0):
            if lo <= x <= hi:
                return True
        return False


def power_potential(theta, c=1.0, K=math.nan):
    return PotentialSpec(family="power", theta=theta, c=c, K=K)


def power_log_potential(theta1, theta2, c=1.0, K=math.nan):
    return PotentialSpec(family="power_log", theta1=theta1, theta2=theta2, c=c, K=K)


def exp_power_potential(theta, c=1.0, K=math.nan):
    return PotentialSpec(family="exp_power", theta=theta, c=c, K=K)


def valley_potential(k0=3.0, alpha=0.5, theta=2.0, radius_law="power", c5=1.0, c6=1.0, eta2=0.0, off_family="power", theta1=1.0, theta2=0.0, c=1.0, K=1.0):
    return PotentialSpec(
        family="valley",
        k0=k0,
        alpha=alpha,
        theta=theta,
        radius_law=radius_law,
        c5=c5,
        c6=c6,
        eta2=eta2,
        off_family=off_family,
        theta1=theta1,
        theta2=theta2,
        c=c,
        K=K,
    )


def eval_potential(spec, x):
    """Evaluate V(x) (vectorized over x)."""
    x = np.asarray(x, dtype=float)
    if spec.family != "valley":
        return spec.radial_profile(np.abs(x))
    scalar = x.ndim == 0
    xv = np.atleast_1d(x)
    out = spec.radial_profile(np.abs(xv))
    balls = spec.valley_balls(float(np.max(xv, initial=0.0)) + 1.0)
    for lo, hi in balls:
        out = np.where((xv >= lo) & (xv <= hi), 1.0, out)
    return float(out[0]) if scalar else out


def sup_potential(spec, r):
    """sup of V over the closed ball B(0, r).

    Exact for the built-in families: the confining radial profile is
    monotone, and the valley (positive axis only) never raises the sup
    above the off-valley profile, which is attained on the negative axis.
    """
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    v = float(spec.radial_profile(r))
    if spec.family == "valley":
        # The bare profile is attained on the (valley-free) negative axis;
        # the level 1 joins in once the first ball reaches into B(0, r).
        if spec.valley_center(1) - spec.valley_radius(1) <= r:
            return max(v, 1.0)
    return v


def sup_potential_interval(spec, lo, hi):
    """sup of V over the interval [lo, hi] (exact for built-in families)."""
    if lo > hi:
        raise ValueError("need lo <= hi")
    v = float(max(spec.radial_profile(abs(lo)), spec.radial_profile(abs(hi))))
    if spec.family == "valley":
        for a, b in spec.valley_balls(hi + 1.0):
            if a <= hi and b >= lo:
                return max(v, 1.0)
    return v


def phi_of_R(spec, R):
    """Confining infimum Phi_K(R) = inf{V(x) : |x| >= R, V(x) > K}.

    For the built-in monotone radial families (and 1-D valleys, whose
    negative axis carries the bare profile) this is max(v(R), K); the
    infimum over the strict super-level set closes at the level K itself.
    Returns +inf when the feasible set is empty (cannot happen for the
    built-in families, whose profiles are unbounded).
    """
    if R <= 0.0:
        raise ValueError("R must be positive")
    return max(float(spec.radial_profile(R)), spec.K)


def theta_of_R(spec, R):
    """Low-potential tail measure Theta_K(R) = |{|x| >= R, V(x) <= K}|."""
    if R <= 0.0:
        raise ValueError("R must be positive")
    # Radius below which the confining profile sits at or below K.
    zK = _low_radius(spec)
    off_part = 2.0 * max(0.0, zK - R)
    if spec.family != "valley":
        return off_part
    # Valley part: balls beyond max(R, zK) plus nothing double counted;
    # inside |x| <= zK the off-part interval already covers the balls.
    cut = max(R, zK)
    tail = _valley_tail_measure(spec, cut)
    return off_part + tail


@lru_cache(maxsize=256)
def _low_radius(spec):
    """Largest radius with radial profile <= K (0 if the profile starts above K)."""
    v0 = float(spec.radial_profile(0.0))
    if v0 > spec.K:
        return 0.0
    probe = 1.0
    while float(spec.radial_profile(probe)) <= spec.K:
        probe *= 2.0
        if probe > 1e12:
            return math.inf
    from .rates import generalized_inverse

    return generalized_inverse(lambda r: float(spec.radial_profile(r)), "increasing", spec.K)


def _valley_tail_measure(spec, R):
    """|A intersect {|x| >= R}| by exact interval clipping.

    Ball left edges increase, so once a ball clears R entirely the rest of
    the series is summed without clipping.
    """
    if spec.family != "valley":
        raise TypeError("tail measure is defined for the valley family")
    n = spec.valley_tail_start(R)
    if n > 1e15:
        # Beyond any float-representable ball measure for the exp_log law;
        # the power law keeps its closed-form remainder.
        if spec.radius_law == "power":
            q = spec.k0 / spec.alpha - 1.0 / spec.d
            with np.errstate(under="ignore"):
                return 2.0 * float(zeta(q, n))
        return 0.0
    total = 0.0
    while True:
        c, r = spec.valley_center(n), spec.valley_radius(n)
        lo, hi = c - r, c + r
        if lo > R:
            break
        if hi > R:
            total += hi - max(lo, R)
        n += 1
        if n > 10**6:
            raise RuntimeError("valley tail clipping runaway")
    return total + _valley_tail_remainder(spec, n)


def _valley_tail_remainder(spec, n):
    """Remainder sum(2 r_m, m >= n) of untouched balls.

    Power radius law: closed form via the Hurwitz zeta function.  The
    exp_log law decays super-exponentially and is summed directly.
    """
    if spec.radius_law == "power":
        q = spec.k0 / spec.alpha - 1.0 / spec.d
        return 2.0 * float(zeta(q, n))
    rem = 0.0
    m = n
    while True:
        t = 2.0 * spec.valley_radius(m)
        rem += t
        m += 1
        if t < 1e-300 or (rem > 0.0 and t < 1e-17 * rem):
            break
        if m - n > 10**6:
            raise RuntimeError("valley remainder did not exhaust; radii decay too slowly")
    return rem


def valley_tail_bound_check(spec, R_list, eps):
    """Compare the exact valley tail measure with c0 / R^(d/alpha - eps).

    Returns a report with the exact tail measures, the fitted amplitude c0
    (max ratio over R_list), and the per-R ratios.  Requires k0 > 2/eps so
    that the power-law bound genuinely dominates the tail.
    """
    if spec.family != "valley":
        raise TypeError("valley_tail_bound_check needs a valley potential")
    if spec.radius_law != "power":
        raise TypeError("the power-law tail bound applies to the power radius law")
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    if spec.k0 <= 2.0 / eps:
        raise ValueError("need k0 > 2/eps for the tail bound")
    exponent = spec.d / spec.alpha - eps
    rows = []
    for R in R_list:
        if R <= 1.0:
            raise ValueError("tail bound is stated for R > 1")
        tail = _valley_tail_measure(spec, R)
        rows.append({"R": R, "tail": tail, "ratio": tail * R**exponent})
    c0 = max(row["ratio"] for row in rows)
    for row in rows:
        row["bound"] = c0 / row["R"] ** exponent
    return {"exponent": exponent, "c0": c0, "rows": rows, "bounded": all(r["ratio"] <= c0 * (1 + 1e-12) for r in rows)}
