"""Special functions, singular power kernels and fractional integrals.

Singular kernels such as (t - x)_+^p with p in (-1, 0) are never sampled at
points.  Cell contributions always go through the exact antiderivative
(product integration), and one-dimensional integrals of products of powers
use QUADPACK's algebraic end-point weights after splitting at every singular
point.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import beta as _sp_beta, gamma as _sp_gamma

from . import _backend
from .errors import DomainError

__all__ = [
    "ConstantSet",
    "beta_fn",
    "cell_power_integral",
    "check_hurst",
    "constants",
    "frac_int_minus",
    "frac_int_plus",
    "gamma_fn",
    "power_product_integral",
    "shifted_power_overlap",
]


def gamma_fn(x: float) -> float:
    """Euler Gamma for positive arguments (scipy/Cephes, ~1e-15 relative)."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"gamma_fn needs a positive argument, got {x}")
    return float(_sp_gamma(x))


def beta_fn(a: float, b: float) -> float:
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn needs positive arguments, got ({a}, {b})")
    return float(_sp_beta(a, b))


def check_hurst(H: float) -> float:
    H = float(H)
    if not (0.5 < H < 1.0) or not math.isfinite(H):
        raise DomainError(f"Hurst parameter must lie in (1/2, 1), got {H}")
    return H


def cell_power_integral(p: float, cell, t: float) -> float:
    """Exact value of int_{x_lo}^{x_hi} (t - x)_+^p dx for p in (-1, 0)."""
    if not (-1.0 < p < 0.0):
        raise DomainError(f"exponent must lie in (-1, 0), got {p}")
    lo, hi = map(float, cell)
    if not lo < hi:
        raise DomainError("cell must satisfy x_lo < x_hi")
    if t <= lo:
        return 0.0
    q = p + 1.0
    return ((t - lo) ** q - (max(t - hi, 0.0)) ** q) / q


def frac_int_plus(alpha: float, grid, f, s, return_info: bool = False):
    """Left Riemann-Liouville integral of a grid function at points ``s``.

    (I_+^alpha f)(s) = sum_i f_i int_{C_i} (s - x)_+^(alpha-1) dx / Gamma(alpha),
    exact for piecewise constant f.  With ``return_info`` a dict reports
    whether any point lies right of the grid or f is non-zero on the first
    cell (support truncated at the left cut).
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    f = np.asarray(f, dtype=float)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    P = _backend.power_avg(alpha - 1.0, grid.boundaries, s_arr) * grid.widths
    vals = P @ f / gamma_fn(alpha)
    out = vals if np.ndim(s) else vals[0]
    if not return_info:
        return out
    info = {
        "right_truncated": bool(np.any(s_arr > grid.right_end)),
        "left_truncated": bool(f[0] != 0.0),
    }
    return out, info


def frac_int_minus(alpha: float, times, u, grid=None, x=None):
    """Right Riemann-Liouville integral of a step function in time.

    ``u[k]`` is the value on [times[k], times[k+1]).  With ``grid`` the result
    is the vector of cell averages (what a divergence needs); with ``x`` it is
    evaluated pointwise.  Both are exact for step functions.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    times = np.asarray(times, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != times.size - 1:
        raise DomainError("u needs one value per time step")
    g1 = gamma_fn(alpha + 1.0)
    if grid is not None:
        T = cell_step_table(alpha, grid, times)
        return u @ T / g1
    x = np.atleast_1d(np.asarray(x, dtype=float))
    up = np.clip(times[None, 1:] - x[:, None], 0.0, None) ** alpha
    dn = np.clip(times[None, :-1] - x[:, None], 0.0, None) ** alpha
    vals = (up - dn) @ u.T / g1 if u.ndim > 1 else (up - dn) @ u / g1
    return vals


def cell_step_table(alpha: float, grid, times) -> np.ndarray:
    """Row k: cell averages of (t_{k+1} - x)_+^alpha - (t_k - x)_+^alpha."""
    times = np.asarray(times, dtype=float)
    return _backend.power_incr_avg(alpha, grid.boundaries, times[:-1], times[1:])


def power_product_integral(lo, hi, centers, exps, g=None, epsabs=0.0, epsrel=1e-12, limit=200):
    """int_lo^hi g(u) prod_j |u - c_j|^(e_j) du for exponents e_j > -1.

    The range is split at every centre inside (lo, hi).  On each piece the
    powers attached to its end points become QUADPACK algebraic weights; the
    remaining factors and ``g`` form the smooth integrand.
    """
    if not hi > lo:
        return 0.0
    centers = np.asarray(centers, dtype=float)
    exps = np.asarray(exps, dtype=float)
    cuts = {lo, hi, *[float(c) for c in centers if lo < c < hi]}
    # a centre just outside the range makes the integrand nearly singular at
    # the end point; geometric cuts towards it keep QUADPACK accurate
    for c in centers:
        for end, sign in ((hi, -1.0), (lo, 1.0)):
            dist = abs(c - end)
            outside = c > hi if sign < 0 else c < lo
            if outside and 0 < dist < 0.25 * (hi - lo):
                step = dist
                while step < 0.5 * (hi - lo):
                    cuts.add(end + sign * step)
                    step *= 4.0
    cuts = sorted(cuts)
    total = 0.0
    for p, q in zip(cuts[:-1], cuts[1:]):
        scale = max(abs(p), abs(q), q - p)
        at_p = np.abs(centers - p) <= 1e-14 * scale
        at_q = np.abs(centers - q) <= 1e-14 * scale
        a = float(exps[at_p].sum())
        b = float(exps[at_q].sum())
        rest = ~(at_p | at_q)
        c_r, e_r = centers[rest], exps[rest]

        def f(v, c_r=c_r, e_r=e_r):
            val = np.prod(np.abs(v - c_r) ** e_r) if c_r.size else 1.0
            return val * (g(v) if g is not None else 1.0)

        with warnings.catch_warnings():
            # tiny graded pieces can hit the roundoff floor at epsrel ~ 1e-12
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if a == 0.0 and b == 0.0:
                val, _ = integrate.quad(f, p, q, epsabs=epsabs, epsrel=epsrel, limit=limit)
            else:
                val, _ = integrate.quad(
                    f, p, q, weight="alg", wvar=(a, b), epsabs=epsabs, epsrel=epsrel, limit=limit
                )
        total += val
    return total


def shifted_power_overlap(gamma: float, s1: float, s2: float) -> float:
    """Numerical int_R (s1 - u)_+^gamma (s2 - u)_+^gamma du, gamma in (-1, -1/2).

    Written as int_0^inf v^gamma (v + D)^gamma dv with D = |s2 - s1|; the
    piece [0, D] carries the algebraic weight, the rest runs to infinity.
    """
    if not -1.0 < gamma < -0.5:
        raise DomainError("gamma must lie in (-1, -1/2)")
    D = abs(s2 - s1)
    head, _ = integrate.quad(
        lambda v: (v + D) ** gamma, 0.0, D, weight="alg", wvar=(gamma, 0.0), epsabs=0.0, epsrel=1e-13
    )
    tail, _ = integrate.quad(
        lambda v: v**gamma * (v + D) ** gamma, D, np.inf, epsabs=0.0, epsrel=1e-13, limit=400
    )
    return head + tail


@dataclass(frozen=True)
class ConstantSet:
    H: float
    A: float
    d: float
    B: float
    C: float
    kappa3: float

    def identity_residuals(self) -> tuple[float, float]:
        """Relative residuals of the two normalization identities."""
        H = self.H
        g = gamma_fn(H - 0.5)
        lhs1 = self.A**2 * beta_fn(H - 0.5, 2 - 2 * H)
        rhs1 = H * (2 * H - 1) * g**2
        lhs2 = self.d * beta_fn(1 - H, H / 2) / gamma_fn(H / 2) ** 2
        rhs2 = math.sqrt(H * (2 * H - 1) / 2)
        return abs(lhs1 - rhs1) / rhs1, abs(lhs2 - rhs2) / rhs2


def fbm_constant(H: float) -> float:
    H = check_hurst(H)
    return math.sqrt(gamma_fn(H - 0.5) * H * (2 * H - 1) * gamma_fn(1.5 - H) / gamma_fn(2 - 2 * H))


def rosenblatt_constant(H: float) -> float:
    H = check_hurst(H)
    return math.sqrt(H * (2 * H - 1) / 2) * gamma_fn(H / 2) ** 2 / beta_fn(1 - H, H / 2)


@functools.lru_cache(maxsize=64)
def constants(H: float, kappa3_method: str = "triple") -> ConstantSet:
    """A, d, B, C and the third cumulant kappa3 of X_1 for Hurst index H."""
    from .kernels import kappa3

    H = check_hurst(H)
    A = fbm_constant(H)
    d = rosenblatt_constant(H)
    g2 = gamma_fn(H / 2) ** 2
    k = math.sqrt(H * (2 * H - 1) / 2)
    B = 4 * d / g2 * k
    C = 2 * d / g2 * H * (2 * H - 1)
    return ConstantSet(H, A, d, B, C, kappa3(H, method=kappa3_method))
