"""Catalog of smooth test functions F with analytic derivatives.

Names accepted by ``parse_function``:

    x2              F(x) = x^2
    x3              F(x) = x^3
    poly:c0,c1,...  F(x) = c0 + c1 x + c2 x^2 + ...   (ascending powers)
    expsq:lam       F(x) = exp(lam x^2)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError


@dataclass(frozen=True)
class SmoothFn:
    """F together with its derivatives; ``derivs[k]`` evaluates F^(k)."""

    name: str
    derivs: tuple
    growth: float = 0.0  # lam for exp(lam x^2) growth, 0 for polynomial growth
    poly: tuple | None = None

    def __call__(self, x):
        return self.derivs[0](x)

    def d(self, k: int) -> Callable:
        if k >= len(self.derivs):
            raise ConfigError(f"{self.name}: derivative of order {k} not available")
        return self.derivs[k]

    def derivative(self) -> "SmoothFn":
        """F' as a SmoothFn (one derivative fewer)."""
        poly = tuple(P.polyder(np.array(self.poly))) if self.poly is not None else None
        return SmoothFn(self.name + "'", self.derivs[1:], self.growth, poly)

    @property
    def is_polynomial(self) -> bool:
        return self.poly is not None


def polynomial(coeffs, name: str | None = None, order: int = 6) -> SmoothFn:
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size == 0:
        c = np.zeros(1)
    derivs = []
    cur = c
    for _ in range(order + 1):
        derivs.append(lambda x, cc=cur.copy(): P.polyval(x, cc))
        cur = P.polyder(cur) if cur.size > 1 else np.zeros(1)
    label = name or "poly:" + ",".join(f"{v:.17g}" for v in c)
    return SmoothFn(label, tuple(derivs), 0.0, tuple(c))


def constant(value: float) -> SmoothFn:
    return polynomial([value], name=f"const:{value:.17g}")


def expsq(lam: float) -> SmoothFn:
    """exp(lam x^2) with derivatives up to order 4 (closed forms)."""
    a = float(lam)

    def e(x):
        return np.exp(a * np.asarray(x) ** 2)

    derivs = (
        e,
        lambda x: 2 * a * x * e(x),
        lambda x: (2 * a + 4 * a**2 * x**2) * e(x),
        lambda x: (12 * a**2 * x + 8 * a**3 * x**3) * e(x),
        lambda x: (12 * a**2 + 48 * a**3 * x**2 + 16 * a**4 * x**4) * e(x),
    )
    return SmoothFn(f"expsq:{a:.17g}", derivs, growth=max(a, 0.0))


def parse_function(spec: str) -> SmoothFn:
    spec = spec.strip()
    if spec == "x2":
        return polynomial([0, 0, 1], name="x2")
    if spec == "x3":
        return polynomial([0, 0, 0, 1], name="x3")
    if spec.startswith("poly:"):
        try:
            coeffs = [float(v) for v in spec[5:].split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad polynomial coefficients in {spec!r}") from exc
        if not coeffs:
            raise ConfigError("poly: needs at least one coefficient")
        return polynomial(coeffs)
    if spec.startswith("expsq:"):
        try:
            lam = float(spec[6:])
        except ValueError as exc:
            raise ConfigError(f"bad lambda in {spec!r}") from exc
        return expsq(lam)
    raise ConfigError(f"unknown function {spec!r}; use x2, x3, poly:<coeffs> or expsq:<lambda>")


def check_growth(F: SmoothFn, b: float, H: float, process: str) -> None:
    """Growth conditions: lam < 1/(4 b^(2H)) for fBm, polynomial F for Rosenblatt."""
    if process == "fbm":
        if F.growth > 0 and not F.growth < 1.0 / (4.0 * b ** (2 * H)):
            raise ConfigError(f"{F.name}: need lambda < 1/(4 b^(2H)) = {1.0 / (4.0 * b ** (2 * H)):.6g}")
    elif process == "rosenblatt":
        if not F.is_polynomial:
            raise ConfigError("Rosenblatt experiments need a polynomial F")
