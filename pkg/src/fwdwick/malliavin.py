"""Finite-dimensional Malliavin calculus on the noise grid.

Coordinates are the cell increments xi_i (variance w_i).  The Malliavin
derivative of a functional is its gradient in these coordinates, read as a
piecewise constant function of x; the divergence of a field u is

    delta(u) = sum_i u_i xi_i - sum_i w_i d_i u_i,

which only needs the diagonal of the Jacobian of u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError

# ------------------------------------------------------- symmetric operators


class DenseSym:
    """Symmetric matrix stored densely."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)

    def matvec(self, x):
        return self.M @ x

    def bilinear(self, a, b):
        return float(a @ self.M @ b)

    def dense(self):
        return self.M


class FactoredSym:
    """sum_m c_m v_m v_m^T with the rows v_m kept, never the G x G matrix."""

    def __init__(self, rows, coeffs):
        self.rows = np.asarray(rows, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)

    def matvec(self, x):
        return (self.coeffs * (self.rows @ x)) @ self.rows

    def bilinear(self, a, b):
        return float(np.sum(self.coeffs * (self.rows @ a) * (self.rows @ b)))

    def dense(self):
        M = (self.rows.T * self.coeffs) @ self.rows
        return 0.5 * (M + M.T)


def rosenblatt_operator(table, t: float) -> FactoredSym:
    """Q_t of a Rosenblatt table as a factored operator."""
    n = table.n_before(t)
    return FactoredSym(table.V[:n], table.d * table.omega[:n])


def increment_operator(table, t0: float, t1: float) -> FactoredSym:
    """Q_{t1} - Q_{t0} as a factored operator."""
    n0, n1 = table.n_before(t0), table.n_before(t1)
    return FactoredSym(table.V[n0:n1], table.d * table.omega[n0:n1])


# ------------------------------------------------------- smooth functionals


@dataclass
class SmoothFunctional:
    """Value, gradient and structured Hessian of one functional at one sample.

    ``outer`` holds (coef, u, v) meaning coef * (u v^T + v u^T) / 2 and
    ``mats`` holds (coef, op) with ``op`` a symmetric operator.
    """

    value: float
    grad: np.ndarray
    outer: list = field(default_factory=list)
    mats: list = field(default_factory=list)

    def second_bilinear(self, a, b) -> float:
        s = 0.0
        for c, u, v in self.outer:
            s += c * 0.5 * ((u @ a) * (v @ b) + (v @ a) * (u @ b))
        for c, op in self.mats:
            s += c * op.bilinear(a, b)
        return float(s)

    def second_matvec(self, x) -> np.ndarray:
        out = np.zeros_like(self.grad)
        for c, u, v in self.outer:
            out += c * 0.5 * (u * (v @ x) + v * (u @ x))
        for c, op in self.mats:
            out += c * op.matvec(x)
        return out

    def second_dense(self) -> np.ndarray:
        G = self.grad.size
        out = np.zeros((G, G))
        for c, u, v in self.outer:
            out += c * 0.5 * (np.outer(u, v) + np.outer(v, u))
        for c, op in self.mats:
            out += c * op.dense()
        return out

    def second_diag(self) -> np.ndarray:
        out = np.zeros_like(self.grad)
        for c, u, v in self.outer:
            out += c * u * v
        for c, op in self.mats:
            out += c * np.diag(op.dense())
        return out


def compose(F, Phi: SmoothFunctional) -> SmoothFunctional:
    """Chain rule: F(Phi) with F' and F'' taken from the SmoothFn ``F``."""
    x = Phi.value
    f1, f2 = float(F.d(1)(x)), float(F.d(2)(x))
    outer = [(f2, Phi.grad, Phi.grad)] + [(f1 * c, u, v) for c, u, v in Phi.outer]
    mats = [(f1 * c, op) for c, op in Phi.mats]
    return SmoothFunctional(float(F(x)), f1 * Phi.grad, outer, mats)


def _xi(sample):
    return sample.xi if hasattr(sample, "xi") else np.asarray(sample, dtype=float)


def functional_of_fbm(F, c_t, sample) -> SmoothFunctional:
    """F(c_t . xi) with gradient F' c_t and Hessian F'' c_t c_t^T."""
    xi = _xi(sample)
    c_t = np.asarray(c_t, dtype=float)
    if c_t.shape != xi.shape:
        raise ShapeError("kernel and noise sizes differ")
    base = SmoothFunctional(float(c_t @ xi), c_t.copy())
    return compose(F, base)


def functional_of_rosenblatt(F, Q, sample, widths) -> SmoothFunctional:
    """F(X) for X = xi^T Q xi - sum_i w_i Q_ii.

    ``Q`` is a DenseSym/FactoredSym operator or a dense array.
    """
    xi = _xi(sample)
    op = Q if hasattr(Q, "matvec") else DenseSym(Q)
    Qxi = op.matvec(xi)
    if isinstance(op, FactoredSym):
        comp = float(np.sum(op.coeffs * ((op.rows**2) @ widths)))
    else:
        comp = float(np.diag(op.dense()) @ widths)
    X = float(xi @ Qxi) - comp
    base = SmoothFunctional(X, 2.0 * Qxi, [], [(2.0, op)])
    return compose(F, base)


# --------------------------------------------------------------- divergences


def skorokhod1(u, du_diag, sample, widths) -> float:
    """delta(u) = sum_i u_i xi_i - sum_i w_i d_i u_i."""
    if du_diag is None:
        raise ContractError("skorokhod1 needs the diagonal derivatives d_i u_i")
    xi = _xi(sample)
    u = np.asarray(u, dtype=float)
    du_diag = np.asarray(du_diag, dtype=float)
    if u.shape[-1] != xi.shape[-1] or du_diag.shape[-1] != xi.shape[-1]:
        raise ShapeError("divergence inputs do not match the grid")
    return np.sum(u * xi, axis=-1) - np.sum(widths * du_diag, axis=-1)


def skorokhod2_rank1(q, Phi: SmoothFunctional, sample, widths) -> float:
    """Second-order divergence of Phi q (x) q:

    Phi (<q,xi>^2 - |q|_W^2) - 2 <q,xi> <q, grad Phi>_W + (Wq)^T Hess(Phi) (Wq).
    """
    xi = _xi(sample)
    q = np.asarray(q, dtype=float)
    wq = widths * q
    qx = float(q @ xi)
    return (
        Phi.value * (qx * qx - float(q @ wq))
        - 2.0 * qx * float(wq @ Phi.grad)
        + Phi.second_bilinear(wq, wq)
    )


def skorokhod2_iterated(q, Phi: SmoothFunctional, sample, widths) -> float:
    """Same quantity as skorokhod2_rank1, as delta applied to first divergences.

    u_i = delta(Phi q_i q) = q_i (Phi <q,xi> - <q, grad Phi>_W), whose diagonal
    derivative is q_i (d_i Phi <q,xi> + Phi q_i - (Hess(Phi) W q)_i).
    """
    xi = _xi(sample)
    q = np.asarray(q, dtype=float)
    wq = widths * q
    qx = float(q @ xi)
    inner = Phi.value * qx - float(wq @ Phi.grad)
    u = q * inner
    du = q * (Phi.grad * qx + Phi.value * q - Phi.second_matvec(wq))
    return float(skorokhod1(u, du, xi, widths))


def wick_square(q, sample, widths) -> float:
    """<q, xi>^2 - |q|_W^2, the second Wiener-Ito integral of q (x) q."""
    xi = _xi(sample)
    return float((q @ xi) ** 2 - (q * q) @ widths)


def s_transform_mc(sampler, zeta, widths, seed: int, replicates: int):
    """E[Phi(xi + w zeta)] by Monte Carlo; returns (mean, standard error).

    ``sampler(xi_batch)`` evaluates the functional on an (R, G) noise batch.
    The shift xi_i -> xi_i + w_i zeta_i is the translation of the white noise
    by the test function zeta.
    """
    from .noise_grid import standard_normals

    G = widths.size
    Z = np.stack([standard_normals(seed, r, G) for r in range(replicates)])
    xi = Z * np.sqrt(widths) + widths * np.asarray(zeta, dtype=float)
    vals = np.asarray(sampler(xi), dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(replicates))


def s_transform(x, zeta, widths=None, seed: int = 0, replicates: int = 10000):
    """S-transform at the test function ``zeta``.

    Chaos elements are handled exactly; a callable on (R, G) noise batches is
    handled by the shifted Monte Carlo route and returns (mean, se).
    """
    from .chaos import ChaosElement, s_transform_chaos

    if isinstance(x, ChaosElement):
        return s_transform_chaos(x, zeta)
    if widths is None:
        raise ContractError("the Monte Carlo route needs the cell widths")
    return s_transform_mc(x, zeta, np.asarray(widths, dtype=float), seed, replicates)
