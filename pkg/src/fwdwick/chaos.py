"""Dense Wiener-chaos oracle for tiny grids.

Everything here is brute force on purpose: symmetric tensors are stored
densely, multiple integrals are expanded coordinate by coordinate into
products of Hermite polynomials, and expectations come from exact Gaussian
moments of monomials.  It certifies the production formulas and is not
meant to scale (G <= 8, orders <= 3 by default).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import OracleLimitError
from .hermite import hermite_eval

MAX_CELLS = 8
MAX_ORDER = 3


def _check(G, n, max_order=MAX_ORDER):
    if G > MAX_CELLS:
        raise OracleLimitError(f"oracle supports at most {MAX_CELLS} cells, got {G}")
    if n > max_order:
        raise OracleLimitError(f"order {n} exceeds the oracle limit {max_order}")


def symmetrize(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    n = T.ndim
    if n <= 1:
        return T.copy()
    perms = list(itertools.permutations(range(n)))
    return sum(np.transpose(T, p) for p in perms) / len(perms)


def sym_tensor(*factors) -> np.ndarray:
    """Symmetrized tensor product of tensors / vectors."""
    T = factors[0]
    for f in factors[1:]:
        T = np.multiply.outer(T, f)
    return symmetrize(T)


def _weight_tensor(widths, n):
    W = np.ones(())
    for _ in range(n):
        W = np.multiply.outer(W, widths)
    return W


def inner(phi, psi, widths) -> float:
    phi, psi = np.asarray(phi), np.asarray(psi)
    return float(np.sum(phi * psi * _weight_tensor(widths, phi.ndim)))


def multi_integral(n: int, tensor, xi, widths, max_order: int = MAX_ORDER):
    """I_n(tensor) at noise ``xi`` (shape (G,) or (R, G)).

    For every index tuple, the repeated coordinates turn into Hermite
    polynomials: prod_j H_{k_j}(xi_j; w_j) with k_j the multiplicity of j.
    """
    xi = np.asarray(xi, dtype=float)
    widths = np.asarray(widths, dtype=float)
    G = widths.size
    _check(G, n, max_order)
    T = np.asarray(tensor, dtype=float)
    if n == 0:
        return float(T) * np.ones(xi.shape[:-1]) if xi.ndim > 1 else float(T)
    Hk = np.empty((n + 1,) + xi.shape)
    for j in range(G):
        for k in range(n + 1):
            Hk[k, ..., j] = hermite_eval(k, widths[j], xi[..., j])
    total = np.zeros(xi.shape[:-1])
    for idx in itertools.product(range(G), repeat=n):
        c = T[idx]
        if c == 0.0:
            continue
        term = np.ones(xi.shape[:-1])
        for j, k in Counter(idx).items():
            term = term * Hk[k, ..., j]
        total = total + c * term
    return total if xi.ndim > 1 else float(total)


def contract1(tensor, vector, widths) -> np.ndarray:
    """(phi (x)_1 g)(i_1..i_{n-1}) = sum_j w_j phi(i_1..i_{n-1}, j) g_j."""
    T = np.asarray(tensor, dtype=float)
    return np.tensordot(T, np.asarray(widths) * np.asarray(vector), axes=([T.ndim - 1], [0]))


def multiply_formula_residual(n: int, tensor, vector, xi, widths) -> float:
    """|I_n(phi) I_1(g) - I_{n+1}(sym(phi (x) g)) - n I_{n-1}(phi (x)_1 g)|, max over rows."""
    phi = symmetrize(tensor)
    g = np.asarray(vector, dtype=float)
    lhs = np.asarray(multi_integral(n, phi, xi, widths, n + 1)) * np.asarray(multi_integral(1, g, xi, widths))
    rhs = np.asarray(multi_integral(n + 1, sym_tensor(phi, g), xi, widths, n + 1))
    if n >= 1:
        rhs = rhs + n * np.asarray(multi_integral(n - 1, contract1(phi, g, widths), xi, widths, n + 1))
    return float(np.max(np.abs(lhs - rhs)))


# ------------------------------------------------------------ chaos elements


@dataclass
class ChaosElement:
    widths: np.ndarray
    tensors: dict = field(default_factory=dict)
    max_order: int = MAX_ORDER

    def __post_init__(self):
        self.widths = np.asarray(self.widths, dtype=float)
        for n, T in list(self.tensors.items()):
            _check(self.widths.size, n, self.max_order)
            self.tensors[n] = symmetrize(np.asarray(T, dtype=float))

    @property
    def order(self) -> int:
        return max(self.tensors) if self.tensors else 0

    def evaluate(self, xi):
        out = 0.0
        for n, T in self.tensors.items():
            out = out + np.asarray(multi_integral(n, T, xi, self.widths, self.max_order))
        return out

    def norm2(self) -> float:
        return sum(math.factorial(n) * inner(T, T, self.widths) for n, T in self.tensors.items())


def constant_element(c: float, widths, max_order: int = MAX_ORDER) -> ChaosElement:
    return ChaosElement(widths, {0: np.array(float(c))}, max_order)


def wick_product(a: ChaosElement, b: ChaosElement) -> ChaosElement:
    """(a <> b)_n = sum_{p+q=n} sym(phi_p (x) psi_q)."""
    max_order = min(a.max_order, b.max_order)
    out = defaultdict(lambda: 0.0)
    for p, A in a.tensors.items():
        for q, B in b.tensors.items():
            if p + q > max_order:
                raise OracleLimitError(f"Wick product order {p + q} exceeds {max_order}")
            out[p + q] = out[p + q] + sym_tensor(A, B)
    return ChaosElement(a.widths, dict(out), max_order)


def s_transform_chaos(a: ChaosElement, zeta, widths=None) -> float:
    """sum_n <phi_n, zeta^{(x) n}> with weight w per index."""
    widths = a.widths if widths is None else widths
    wz = np.asarray(widths) * np.asarray(zeta, dtype=float)
    total = 0.0
    for n, T in a.tensors.items():
        v = T
        for _ in range(n):
            v = np.tensordot(v, wz, axes=([v.ndim - 1], [0]))
        total += float(v)
    return total


def skorokhod2_chaos(a: ChaosElement, q) -> ChaosElement:
    """delta^2(Phi q (x) q) = sum_n I_{n+2}(sym(phi_n (x) q (x) q))."""
    q = np.asarray(q, dtype=float)
    out = {}
    for n, T in a.tensors.items():
        out[n + 2] = sym_tensor(T, q, q) if n > 0 else float(T) * sym_tensor(q, q)
    return ChaosElement(a.widths, out, a.max_order + 2)


# -------------------------------------------------------------- polynomials


class Poly:
    """Multivariate polynomial in xi_1..xi_G, stored as {exponents: coef}."""

    def __init__(self, G: int, terms=None):
        self.G = G
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0.0}

    @classmethod
    def const(cls, G, c):
        return cls(G, {(0,) * G: float(c)})

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Poly(self.G, out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return Poly(self.G, {k: c * v for k, v in self.terms.items()})

    def __mul__(self, other):
        out = defaultdict(float)
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                out[tuple(a + b for a, b in zip(k1, k2))] += v1 * v2
        return Poly(self.G, dict(out))

    def deriv(self, j):
        out = defaultdict(float)
        for k, v in self.terms.items():
            if k[j] > 0:
                kk = list(k)
                kk[j] -= 1
                out[tuple(kk)] += v * k[j]
        return Poly(self.G, dict(out))

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        total = np.zeros(xi.shape[:-1])
        for k, v in self.terms.items():
            total = total + v * np.prod(xi ** np.array(k), axis=-1)
        return total if xi.ndim > 1 else float(total)

    def expectation(self, widths) -> float:
        """Exact Gaussian expectation: E[xi^a] = (a-1)!! w^(a/2) for even a."""
        total = 0.0
        for k, v in self.terms.items():
            m = 1.0
            for a, w in zip(k, widths):
                if a % 2:
                    m = 0.0
                    break
                m *= _double_factorial(a - 1) * w ** (a // 2)
            total += v * m
        return total


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def _hermite_poly_1d(k, var):
    # H_k(x; var) = sum_m (-1)^m k! / (m! (k-2m)! 2^m) var^m x^(k-2m)
    return {k - 2 * m: (-1) ** m * math.factorial(k) / (math.factorial(m) * math.factorial(k - 2 * m) * 2**m) * var**m
            for m in range(k // 2 + 1)}


def multi_integral_poly(n: int, tensor, widths) -> Poly:
    """I_n(tensor) as an explicit polynomial in the noise coordinates."""
    widths = np.asarray(widths, dtype=float)
    G = widths.size
    T = np.asarray(tensor, dtype=float)
    if n == 0:
        return Poly.const(G, float(T))
    out = Poly(G)
    for idx in itertools.product(range(G), repeat=n):
        c = T[idx]
        if c == 0.0:
            continue
        term = Poly.const(G, c)
        for j, k in Counter(idx).items():
            h = _hermite_poly_1d(k, widths[j])
            terms = {}
            for p, v in h.items():
                e = [0] * G
                e[j] = p
                terms[tuple(e)] = v
            term = term * Poly(G, terms)
        out = out + term
    return out


def element_poly(a: ChaosElement) -> Poly:
    out = Poly(a.widths.size)
    for n, T in a.tensors.items():
        out = out + multi_integral_poly(n, T, a.widths)
    return out
