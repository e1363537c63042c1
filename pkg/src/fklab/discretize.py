"""Grid, generator matrix, and quadratic forms for the 1-D operator.

The generator -L^V is discretized on a uniform grid with Dirichlet
truncation: f = 0 outside the cell cover [-R-h/2, R+h/2], with the
exterior jump intensity kept as a per-node killing rate.  Jumps below
one grid spacing are lumped into their second moment
sigma_h^2(x) = integral(z^2 J(x, x+z), |z|<=h) and discretized as the
symmetric divergence-form band (1/2) d/dx(sigma_h^2 d/dx); for kernels
that are not translation invariant this band absorbs the first-order
drift correction exactly at the scheme's order, keeping the matrix
symmetric by construction.

The same building blocks provide the explicit-constant mollifier
inequality check and the fractional Sobolev inequality check.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AssemblyError
from .model import eval_potential, _variable_order_exponent

ASYMMETRY_GATE = 1e-6


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid on [-R, R]; N odd so that 0 is a node."""

    R: float
    N: int

    def __post_init__(self):
        if self.R <= 0.0:
            raise ValueError("R must be positive")
        if self.N < 16:
            raise ValueError("N must be at least 16")
        if self.N % 2 == 0:
            raise ValueError("N must be odd so that 0 is a node")

    @property
    def h(self):
        return 2.0 * self.R / (self.N - 1)

    @property
    def nodes(self):
        return -self.R + self.h * np.arange(self.N)


@dataclass(eq=False)
class OperatorAssembly:
    """Discrete -L^V with Dirichlet truncation plus its quadratic form.

    A        : symmetric N x N matrix of -L^V (post-symmetrized).
    kill     : exterior jump rates k_i = integral(J(x_i, y), y outside
               the cell cover).
    Bform    : matrix of the Dirichlet form, f.Bform.f * h ~ D^V(f, f).
    """

    grid: Grid
    kernel: object
    potential: object
    A: np.ndarray
    kill: np.ndarray
    Bform: np.ndarray
    asymmetry_defect: float = 0.0

    def form_value(self, f):
        f = np.asarray(f, dtype=float)
        return float(f @ self.Bform @ f * self.grid.h)

    def apply_generator(self, f):
        """(-L^V f) on the grid."""
        return self.A @ np.asarray(f, dtype=float)


def _gauss_nodes(n=24):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w  # mapped to [0, 1]


def _band_second_moments(kernel, grid):
    """sigma_h^2 at the N-1 cell midpoints."""
    h = grid.h
    if kernel.translation_invariant:
        val = kernel.truncated_second_moment(h)
        return np.full(grid.N - 1, val)
    mids = grid.nodes[:-1] + 0.5 * h
    # z = h u^(1/(2-alpha2)) regularizes the z^(1-a) integrand at 0.
    u, w = _gauss_nodes()
    p = 1.0 / (2.0 - kernel.alpha2)
    z = h * u[None, :] ** p
    dz = h * p * u[None, :] ** (p - 1.0)
    a_p = _variable_order_exponent(kernel.alpha1, kernel.alpha2, 2.0 * mids[:, None] + z)
    a_m = _variable_order_exponent(kernel.alpha1, kernel.alpha2, 2.0 * mids[:, None] - z)
    vals = (z ** (1.0 - a_p) + z ** (1.0 - a_m)) * dz
    return vals @ w


def _kill_rates(kernel, grid):
    """k_i = integral(J(x_i, y), |y| > R + h/2)."""
    x = grid.nodes
    edge = grid.R + 0.5 * grid.h
    if kernel.translation_invariant:
        return np.array([kernel.one_sided_tail_mass(edge - xi) + kernel.one_sided_tail_mass(edge + xi) for xi in x])
    k = np.zeros(grid.N)
    u, w = _gauss_nodes(48)
    for i, xi in enumerate(x):
        total = 0.0
        right = edge - xi
        if right < kernel.kappa:
            z = right + (kernel.kappa - right) * u
            av = _variable_order_exponent(kernel.alpha1, kernel.alpha2, 2.0 * xi + z)
            total += float(np.sum(z ** (-1.0 - av) * w) * (kernel.kappa - right))
        left = edge + xi
        if left < kernel.kappa:
            z = left + (kernel.kappa - left) * u
            av = _variable_order_exponent(kernel.alpha1, kernel.alpha2, 2.0 * xi - z)
            total += float(np.sum(z ** (-1.0 - av) * w) * (kernel.kappa - left))
        k[i] = total
    return k


def kernel_matrix(kernel, grid):
    """J(x_i, x_j) off the diagonal, zeros on it."""
    x = grid.nodes
    dx = x[:, None] - x[None, :]
    adx = np.abs(dx)
    np.fill_diagonal(adx, 1.0)  # placeholder, masked out below
    if kernel.translation_invariant:
        J = kernel.levy_density(adx)
    else:
        a = _variable_order_exponent(kernel.alpha1, kernel.alpha2, x[:, None] + x[None, :])
        with np.errstate(over="ignore"):
            J = np.where(adx <= kernel.kappa, adx ** (-1.0 - a), 0.0)
    np.fill_diagonal(J, 0.0)
    return J


def assemble_generator(kernel, potential, grid):
    """Assemble the symmetric matrix of -L^V on the grid."""
    h = grid.h
    if not (h < kernel.kappa / 4.0):
        raise ValueError(f"grid too coarse: need h < kappa/4, got h={h:g}")
    if not (h < 1.0):
        raise ValueError("grid too coarse: need h < 1 (compensation radius)")
    x = grid.nodes
    N = grid.N
    J = kernel_matrix(kernel, grid)
    # far field: all couplings at distance > h (i.e. |i-j| >= 2)
    W = J * h
    idx = np.arange(N)
    band_mask = np.abs(idx[:, None] - idx[None, :]) < 2
    W[band_mask] = 0.0
    # near-diagonal band: divergence-form second-moment lumping
    s2 = _band_second_moments(kernel, grid)
    coup = s2 / (2.0 * h * h)
    W[idx[:-1], idx[:-1] + 1] += coup
    W[idx[:-1] + 1, idx[:-1]] += coup
    kill = _kill_rates(kernel, grid)
    V = np.asarray(eval_potential(potential, x), dtype=float)
    A = -W
    A[idx, idx] = W.sum(axis=1) + kill + V
    defect = float(np.max(np.abs(A - A.T)))
    scale = float(np.max(np.abs(A)))
    if defect > ASYMMETRY_GATE * scale:
        raise AssemblyError(f"asymmetry defect {defect:g} exceeds {ASYMMETRY_GATE:g} * |A| = {ASYMMETRY_GATE * scale:g}")
    A = 0.5 * (A + A.T)
    B = assemble_form(kernel, potential, grid, _precomputed=(J, s2, kill, V))
    return OperatorAssembly(grid=grid, kernel=kernel, potential=potential, A=A, kill=kill, Bform=B, asymmetry_defect=defect)


def assemble_form(kernel, potential, grid, _precomputed=None):
    """Matrix B with f.B.f * h equal to the discrete Dirichlet form D^V.

    Built from the half double sum (1/2) sum (f_i - f_j)^2 J_ij h^2 plus
    the band, killing, and potential terms; coincides with the generator
    matrix because the form was normalized against the generator.
    """
    h = grid.h
    N = grid.N
    if _precomputed is None:
        J = kernel_matrix(kernel, grid)
        s2 = _band_second_moments(kernel, grid)
        kill = _kill_rates(kernel, grid)
        V = np.asarray(eval_potential(potential, grid.nodes), dtype=float)
    else:
        J, s2, kill, V = _precomputed
    idx = np.arange(N)
    W = J * h
    band_mask = np.abs(idx[:, None] - idx[None, :]) < 2
    W[band_mask] = 0.0
    coup = s2 / (2.0 * h * h)
    W[idx[:-1], idx[:-1] + 1] += coup
    W[idx[:-1] + 1, idx[:-1]] += coup
    W = 0.5 * (W + W.T)
    # graph-Laplacian layout: diagonally dominant, hence positive semidefinite
    return np.diag(W.sum(axis=1) + kill + V) - W


def explicit_double_sum_form(kernel, potential, grid, f):
    """Oracle: (1/2) sum_{i != j} (f_i-f_j)^2 J_ij h^2 + sum f_i^2 (V_i+k_i) h.

    Direct-J evaluation at every pair, including nearest neighbours; an
    assembly-independent reference for the quadratic form on smooth f.
    """
    f = np.asarray(f, dtype=float)
    J = kernel_matrix(kernel, grid)
    h = grid.h
    diff = f[:, None] - f[None, :]
    jump = 0.5 * float(np.sum(diff**2 * J)) * h * h
    kill = _kill_rates(kernel, grid)
    V = np.asarray(eval_potential(potential, grid.nodes), dtype=float)
    return jump + float(np.sum(f**2 * (V + kill)) * h)


def local_sp_explicit_check(grid, kernel, f, r, s):
    """Both sides of the exact-constant mollifier inequality.

    lhs = integral(f^2, B(0,r)),
    rhs = (2 s^(d+alpha1)/|B(0,s)|) * double-integral over |x-y| <= s of
          (f(x)-f(y))^2 / |x-y|^(d+alpha1)
        + (2/|B(0,s)|) (integral(|f|, B(0,r+s)))^2,
    all as grid sums (d = 1, |B(0,s)| = 2s).  The constants are exact;
    the caller asserts lhs <= rhs.
    """
    if not (0.0 < s <= kernel.kappa <= r):
        raise ValueError(f"need 0 < s <= kappa <= r, got s={s}, kappa={kernel.kappa}, r={r}")
    f = np.asarray(f, dtype=float)
    x = grid.nodes
    h = grid.h
    a1 = kernel.alpha1
    lhs = float(np.sum(f[np.abs(x) <= r] ** 2) * h)
    dx = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dx, np.inf)
    mask = dx <= s
    diff2 = (f[:, None] - f[None, :]) ** 2
    sing = float(np.sum(np.where(mask, diff2 / dx ** (1.0 + a1), 0.0))) * h * h
    t1 = (2.0 * s ** (1.0 + a1) / (2.0 * s)) * sing
    t2 = (2.0 / (2.0 * s)) * float(np.sum(np.abs(f[np.abs(x) <= r + s])) * h) ** 2
    return lhs, t1 + t2


@lru_cache(maxsize=8)
def _free_form_matrix(kernel, grid):
    """Dirichlet-form matrix of the bare kernel (V = 0), cached."""
    from .model import PotentialSpec

    zero = PotentialSpec(family="power", theta=1.0, c=0.0, K=1.0)
    return assemble_form(kernel, zero, grid)


def sobolev_check(grid, kernel, f):
    """(||f||_{L^p}^2, D(f,f) + ||f||_2^2) with p = 2d/(d - alpha1).

    Needs alpha1 < d (in 1-D: alpha1 < 1); used first to calibrate the
    Sobolev constant and then asserted with the frozen value.
    """
    if kernel.alpha1 >= kernel.d:
        raise ValueError("Sobolev exponent needs alpha1 < d")
    p = 2.0 * kernel.d / (kernel.d - kernel.alpha1)
    f = np.asarray(f, dtype=float)
    h = grid.h
    lhs = float(np.sum(np.abs(f) ** p) * h) ** (2.0 / p)
    B0 = _free_form_matrix(kernel, grid)
    rhs_form = float(f @ B0 @ f * h) + float(np.sum(f**2) * h)
    return lhs, rhs_form


def save_assembly(path, assembly):
    """Dense binary export: int64 N, float64 R, float64 h, then A row-major."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qdd", assembly.grid.N, assembly.grid.R, assembly.grid.h))
        fh.write(np.ascontiguousarray(assembly.A, dtype="<f8").tobytes())


def load_matrix(path):
    """Read back a matrix written by save_assembly; returns (N, R, h, A)."""
    with open(path, "rb") as fh:
        N, R, h = struct.unpack("<qdd", fh.read(24))
        A = np.frombuffer(fh.read(8 * N * N), dtype="<f8").reshape(N, N).copy()
    return N, R, h, A
