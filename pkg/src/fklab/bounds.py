"""Ground-state envelopes and decay-rate fits.

Envelopes carry only the exponent of the predicted decay; multiplicative
constants are never asserted, so all comparisons against a computed
ground state are offset-aligned on the log scale.  Decay fits regress
-log phi_1 on |x| log^b(1+|x|) over a window that excludes both the core
(asymptotics not set in) and the boundary (Dirichlet pollution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import sup_potential

ENVELOPE_KINDS = (
    "prop31_lower",
    "thm12_lower",
    "thm12_upper",
    "ex12_gamma_inf",
    "ex12_gamma_finite",
    "prop41_power",
    "prop41_exp",
)


@dataclass(frozen=True)
class Envelope:
    """A ground-state envelope exponent family.

    kind selects the decay law; ``side`` ("lower"/"upper") selects the
    (1+eps) or (1-eps) variant where the two bounds differ in shape.
    eval_envelope returns log of the envelope up to the unknown
    multiplicative constant (so values are <= 0 beyond radius ~1).
    """

    kind: str
    kappa: float = 1.0
    epsilon: float = 0.1
    theta: float = 2.0
    gamma: float = math.inf
    theta5: float = 2.0
    theta6: float = 0.5
    c7: float = 1.0
    c8: float = 1.0
    theta7: float = 0.5
    theta8: float = 0.5
    side: str = "lower"
    potential: object = None

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.side not in ("lower", "upper"):
            raise ValueError("side must be 'lower' or 'upper'")
        if self.kind == "prop31_lower" and not (0.0 < self.epsilon < 1.0 / 11.0):
            raise ValueError("prop31_lower needs epsilon in (0, 1/11)")
        if self.kind != "prop31_lower" and not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.kind == "ex12_gamma_finite" and not (1.0 < self.gamma < math.inf):
            raise ValueError("ex12_gamma_finite needs gamma in (1, inf)")
        if self.kind == "prop31_lower" and self.potential is None:
            raise ValueError("prop31_lower needs the potential for its sup term")


def eval_envelope(env, x):
    """Log of the envelope at x, without the multiplicative constant."""
    ax = np.abs(np.asarray(x, dtype=float))
    e, kap = env.epsilon, env.kappa
    if env.kind == "prop31_lower":
        vs = np.array([sup_potential(env.potential, a + 2.0 * e * kap) for a in np.atleast_1d(ax)])
        vs = vs.reshape(ax.shape) if ax.shape else float(vs[0])
        return -(1.0 / (kap * (1.0 - 6.0 * e))) * ax * np.log(1.0 + ax + vs)
    if env.kind == "thm12_lower":
        return -((1.0 + e) * env.theta / kap) * ax * np.log1p(ax)
    if env.kind == "thm12_upper":
        return -((1.0 - e) * env.theta / kap) * ax * np.log1p(ax)
    if env.kind == "ex12_gamma_inf":
        fac = (1.0 + e) if env.side == "lower" else (1.0 - e)
        return -fac * env.theta * ax * np.log1p(ax)
    if env.kind == "ex12_gamma_finite":
        q = (env.gamma - 1.0) / env.gamma
        return -(env.theta**q) * ax * np.log1p(ax) ** q
    if env.kind == "prop41_power":
        if env.side == "lower":
            return -((1.0 + e) / kap) * ax ** (env.theta6 + 1.0)
        return -((1.0 - e) * env.theta5 / kap) * ax * np.log1p(ax)
    if env.kind == "prop41_exp":
        if env.side == "lower":
            return -(env.c8 * (1.0 + e) / kap) * ax ** (env.theta8 + 1.0)
        return -(env.c7 * (1.0 - e) / kap) * ax ** (env.theta7 + 1.0)
    raise ValueError(env.kind)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of -log phi1 = a |x| log^b(1+|x|) + c."""

    a: float
    b: float
    c: float
    residual: float
    window: tuple
    b_free: bool


def _fit_fixed_b(ax, y, b):
    basis = np.column_stack([ax * np.log1p(ax) ** b, np.ones_like(ax)])
    coef, res, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = float(np.sqrt(np.mean((basis @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def fit_decay(xs, phi1=None, model="power_log_b_free", b_fixed=1.0, window=None, R=None, log_phi1=None):
    """Fit the decay of a positive grid function on the standard window.

    ``model`` is "power_log_b_free" (golden-section over b after a coarse
    grid) or "b_fixed".  The window defaults to R/4 <= |x| <= 3R/4.
    Deep tails should be passed as ``log_phi1`` (e.g. from the eigen-
    identity tail extension), which sidesteps float underflow.
    """
    xs = np.asarray(xs, dtype=float)
    if R is None:
        R = float(np.max(np.abs(xs)))
    if window is None:
        window = (R / 4.0, 3.0 * R / 4.0)
    lo, hi = window
    sel = (np.abs(xs) >= lo) & (np.abs(xs) <= hi)
    if np.sum(sel) < 10:
        raise ValueError(f"fit window [{lo:g}, {hi:g}] holds fewer than 10 nodes")
    if log_phi1 is not None:
        y = -np.asarray(log_phi1, dtype=float)[sel]
        if np.any(~np.isfinite(y)):
            raise ValueError("log_phi1 must be finite on the fit window")
    else:
        phi1 = np.asarray(phi1, dtype=float)
        if np.any(phi1[sel] <= 0.0):
            raise ValueError("phi1 must be positive on the fit window")
        y = -np.log(phi1[sel])
    ax = np.abs(xs[sel])
    if model == "b_fixed":
        a, c, resid = _fit_fixed_b(ax, y, b_fixed)
        return DecayFit(a=a, b=b_fixed, c=c, residual=resid, window=(lo, hi), b_free=False)
    if model != "power_log_b_free":
        raise ValueError(f"unknown fit model {model!r}")
    bs = np.linspace(0.05, 2.5, 50)
    resids = [_fit_fixed_b(ax, y, b)[2] for b in bs]
    i = int(np.argmin(resids))
    blo, bhi = bs[max(0, i - 1)], bs[min(len(bs) - 1, i + 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    b1, b2 = bhi - gr * (bhi - blo), blo + gr * (bhi - blo)
    f1, f2 = _fit_fixed_b(ax, y, b1)[2], _fit_fixed_b(ax, y, b2)[2]
    for _ in range(60):
        if f1 < f2:
            bhi, b2, f2 = b2, b1, f1
            b1 = bhi - gr * (bhi - blo)
            f1 = _fit_fixed_b(ax, y, b1)[2]
        else:
            blo, b1, f1 = b1, b2, f2
            b2 = blo + gr * (bhi - blo)
            f2 = _fit_fixed_b(ax, y, b2)[2]
        if bhi - blo < 1e-10:
            break
    b = 0.5 * (blo + bhi)
    a, c, resid = _fit_fixed_b(ax, y, b)
    return DecayFit(a=a, b=b, c=c, residual=resid, window=(lo, hi), b_free=True)


def envelope_sandwich_report(xs, phi1, lower_env, upper_env, R=None, band=0.2, log_phi1=None):
    """Offset-aligned envelope comparison on the fit window.

    The lower envelope for phi1 is an upper bound for -log phi1 and vice
    versa; both are aligned to -log phi1 at the window midpoint, then
    per-node violations outside the (1 +- band) corridor are counted.
    """
    xs = np.asarray(xs, dtype=float)
    if R is None:
        R = float(np.max(np.abs(xs)))
    lo, hi = R / 4.0, 3.0 * R / 4.0
    if log_phi1 is not None:
        lp = np.asarray(log_phi1, dtype=float)
        sel = (np.abs(xs) >= lo) & (np.abs(xs) <= hi) & np.isfinite(lp)
        y = -lp[sel]
    else:
        phi1 = np.asarray(phi1, dtype=float)
        sel = (np.abs(xs) >= lo) & (np.abs(xs) <= hi) & (phi1 > 0.0)
        y = -np.log(phi1[sel])
    ax = np.abs(xs[sel])
    mid = 0.5 * (lo + hi)
    imid = int(np.argmin(np.abs(ax - mid)))
    e_hi = -np.asarray(eval_envelope(lower_env, ax))  # upper bound for -log phi1
    e_lo = -np.asarray(eval_envelope(upper_env, ax))  # lower bound for -log phi1
    e_hi = e_hi - e_hi[imid] + y[imid]
    e_lo = e_lo - e_lo[imid] + y[imid]
    viol_hi = y > (1.0 + band) * e_hi
    viol_lo = y < (1.0 - band) * e_lo
    viol = viol_hi | viol_lo
    margin_hi = np.max(y / e_hi) if np.all(e_hi > 0) else math.inf
    margin_lo = np.min(y / e_lo) if np.all(e_lo > 0) else -math.inf
    return {
        "nodes": int(np.sum(sel)),
        "violations": int(np.sum(viol)),
        "violation_fraction": float(np.mean(viol)),
        "max_ratio_to_upper": float(margin_hi),
        "min_ratio_to_lower": float(margin_lo),
        "band": band,
    }
