"""Hermite polynomials with variance parameter and Hermite-coefficient tools.

H_{0}(x) = 1, H_{1}(x) = x, H_{n+1}(x) = x H_n(x) - sigma2 n H_{n-1}(x),
orthogonal under N(0, sigma2) with squared norms n! sigma2^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError
from .frac_ops import beta_fn, check_hurst, fbm_constant, frac_int_plus, gamma_fn


@dataclass(frozen=True)
class HermiteBasis:
    sigma2: float
    N: int

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    def table(self, x) -> np.ndarray:
        return _backend.hermite_table(self.N, self.sigma2, x)

    def norm2(self, n: int) -> float:
        return math.factorial(n) * self.sigma2**n


def hermite_eval(n: int, sigma2: float, x):
    """H_{n,sigma2}(x) by the three-term recurrence."""
    if n < 0:
        raise DomainError("order must be non-negative")
    vals = _backend.hermite_table(max(n, 1), float(sigma2), np.asarray(x, dtype=float))[n]
    return vals if np.ndim(x) else float(vals)


def gauss_expectation(f, sigma2: float, n: int) -> float:
    """E[f(sigma Z)] by n-point Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return float(np.sum(w * f(math.sqrt(sigma2) * x)) / math.sqrt(2 * math.pi))


@dataclass
class HermiteCoeffs:
    values: np.ndarray
    sigma2: float
    nodes: int
    converged: bool
    warnings: list = field(default_factory=list)


def _coeffs_at(F, sigma2, N, nodes):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    y = math.sqrt(sigma2) * x
    Hn = _backend.hermite_table(N, sigma2, y)
    fy = F(y)
    norms = np.array([math.sqrt(math.factorial(n)) * sigma2 ** (n / 2) for n in range(N + 1)])
    return (Hn @ (w * fy)) / math.sqrt(2 * math.pi) / norms


def _check_integrable(F, sigma2):
    lam = getattr(F, "growth", 0.0)
    if lam > 0 and not lam < 1.0 / (4.0 * sigma2):
        raise DomainError(f"exp({lam} x^2) growth needs sigma2 < 1/(4 lambda) = {1 / (4 * lam):.6g}")


def hermite_coeffs(F, sigma2: float, N: int, start_nodes: int = 32, max_nodes: int = 512, tol: float = 1e-12):
    """Normalized coefficients c_n = E[F H_n] / (sqrt(n!) sigma^n), n = 0..N.

    The Gauss-Hermite order doubles until successive coefficient vectors
    differ by less than ``tol`` (relative to their size).
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    _check_integrable(F, sigma2)
    nodes = max(start_nodes, N + 2)
    prev = _coeffs_at(F, sigma2, N, nodes)
    while nodes < max_nodes:
        nodes *= 2
        cur = _coeffs_at(F, sigma2, N, nodes)
        scale = max(np.abs(cur).max(), 1e-300)
        if np.abs(cur - prev).max() <= tol * scale:
            return HermiteCoeffs(cur, sigma2, nodes, True)
        prev = cur
    res = HermiteCoeffs(prev, sigma2, nodes, False)
    res.warnings.append("Gauss-Hermite quadrature did not settle; coefficient tail may not decay")
    return res


def parseval_gap(F, sigma2: float, N: int) -> float:
    """|sum c_n^2 - E[F^2]| relative to E[F^2]."""
    c = hermite_coeffs(F, sigma2, N).values
    e2 = gauss_expectation(lambda y: F(y) ** 2, sigma2, 4 * (N + 8))
    return abs(np.sum(c**2) - e2) / max(abs(e2), 1e-300)


def derivative_shift_check(F, dF, sigma2: float, N: int) -> float:
    """Max relative gap between coefficients of F' and sqrt(n+1)/sigma c_{n+1}.

    Entries below 1e-6 of the largest coefficient are compared on that
    absolute scale instead: exact zeros (parity) come out of the quadrature
    as roundoff of order 1e-15 and carry no relative information.
    """
    c = hermite_coeffs(F, sigma2, N + 1).values
    d = hermite_coeffs(dF, sigma2, N).values
    shifted = np.sqrt(np.arange(1, N + 2)) / math.sqrt(sigma2) * c[1:]
    # F's own coefficients set the roundoff level (F' may vanish identically)
    scale = max(np.abs(d).max(), np.abs(shifted).max(), np.abs(c).max() * math.sqrt(N + 1) / math.sqrt(sigma2))
    if scale == 0.0:
        return 0.0
    denom = np.maximum(np.abs(d), 1e-6 * scale)
    return float(np.max(np.abs(d - shifted) / denom))


def grad_fbm_closed_form(H: float, t: float, s: float) -> float:
    """Deterministic factor f with grad^{H-1/2}(F(B_t))(s) = f F'(B_t).

    f = A beta(H-1/2, 2-2H) / Gamma(H-1/2)^2 * int_0^t |s - r|^(2H-2) dr.
    """
    H = check_hurst(H)
    if not (s > 0 and t > 0):
        raise DomainError("s and t must be positive")
    e = 2 * H - 1
    if s >= t:
        integral = (s**e - (s - t) ** e) / e
    else:
        integral = (s**e + (t - s) ** e) / e
    return fbm_constant(H) * beta_fn(H - 0.5, 2 - 2 * H) / gamma_fn(H - 0.5) ** 2 * integral


def grad_fbm_discrete(grid, c_t, H: float, s) -> np.ndarray:
    """I_+^{H-1/2} applied to the grid Malliavin derivative c_t of B_t, at s."""
    return frac_int_plus(H - 0.5, grid, c_t, s)
