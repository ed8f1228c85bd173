"""Deterministic kernels: process kernels, trace kernels, l/e kernels, kappa3.

Process kernel tables
---------------------
fBm.  B_t = sum_i (c_t)_i xi_i with c_t the cell averages of

    g_{0,t}(x) = A / Gamma(H - 1/2) * [(t - x)_+^(H-1/2) - (-x)_+^(H-1/2)] / (H - 1/2),

which is exact through the power antiderivative.

Rosenblatt.  The cell-pair averages of f_t(x1, x2) are never stored densely.
The time integral over [0, t] is split at every cell boundary and every path
time, and each piece gets a graded Gauss-Legendre rule (see ``TimeQuadrature``).
With v_m the cell averages of (s_m - x)_+^(H/2-1) / Gamma(H/2) at node s_m,

    Q_t = d * sum_{s_m < t} omega_m v_m v_m^T,

which is symmetric by construction and costs O(S G) memory for S nodes.
"""

from __future__ import annotations

import functools
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import beta as _beta, betainc, hyp2f1

from . import _backend
from .errors import BudgetError, ConfigError
from .frac_ops import check_hurst, fbm_constant, gamma_fn, power_product_integral, rosenblatt_constant

# ----------------------------------------------------------------- time nodes


def _graded_rule(nq: int):
    x, w = np.polynomial.legendre.leggauss(nq)
    v = 0.5 * (x + 1.0)
    wv = 0.5 * w
    # u = v^3 clusters nodes at the end point of each half
    return v**3, 3.0 * v**2 * wv


@dataclass(frozen=True, eq=False)
class TimeQuadrature:
    """Nodes and weights for integrals over [0, t_max] in the time variable.

    Every segment between consecutive breakpoints is halved and each half gets
    an ``nq``-point Gauss-Legendre rule after the substitution u = v^3 towards
    its outer end, so end-point singularities of order (s - x)^(H/2-1) and
    |t - s|^(H-1) are integrated accurately.
    """

    breakpoints: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    segment: np.ndarray
    nq: int

    @classmethod
    def build(cls, grid, times, nq: int = 3) -> "TimeQuadrature":
        times = np.asarray(times, dtype=float)
        tmax = float(times.max())
        if tmax <= 0:
            raise ConfigError("time grid needs a positive time")
        b = grid.boundaries
        pts = np.concatenate([[0.0, tmax], times[(times > 0) & (times <= tmax)], b[(b > 0) & (b < tmax)]])
        pts = np.unique(pts)
        keep = np.concatenate([[True], np.diff(pts) > 1e-12 * max(1.0, tmax)])
        pts = pts[keep]
        u, wu = _graded_rule(nq)
        lo, hi = pts[:-1], pts[1:]
        half = 0.5 * (hi - lo)
        left = lo[:, None] + half[:, None] * u[None, :]
        right = hi[:, None] - half[:, None] * u[None, ::-1]
        nodes = np.concatenate([left, right], axis=1).ravel()
        wts = np.concatenate([half[:, None] * wu[None, :], half[:, None] * wu[None, ::-1]], axis=1).ravel()
        seg = np.repeat(np.arange(lo.size), 2 * nq)
        return cls(pts, nodes, wts, seg, nq)

    @property
    def size(self) -> int:
        return self.nodes.size

    def count_before(self, t: float) -> int:
        """Number of nodes in [0, t); t must be a breakpoint."""
        bp = self.breakpoints
        j = int(np.searchsorted(bp, t))
        if j > 0 and (j == bp.size or abs(bp[j - 1] - t) < abs(bp[j] - t)):
            j -= 1
        if j >= bp.size or abs(bp[j] - t) > 1e-12 * max(1.0, t):
            if t <= 0:
                return 0
            raise ConfigError(f"time {t} is not a quadrature breakpoint")
        return int(j) * 2 * self.nq


# ------------------------------------------------------------ process tables


def _time_key(times) -> str:
    return hashlib.sha256(np.asarray(times, dtype=float).tobytes()).hexdigest()[:16]


def _check_times(grid, times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ConfigError("time grid must be a non-empty 1-d array")
    if np.any(times < 0) or np.any(times > grid.right_end):
        raise ConfigError("time grid must lie in [0, grid right end]")
    return times


@dataclass(frozen=True, eq=False)
class FbmKernelTable:
    H: float
    grid: object
    times: np.ndarray
    C: np.ndarray  # (M, G) cell averages of g_{0,t}

    def column(self, k: int) -> np.ndarray:
        return self.C[k]

    def variance(self) -> np.ndarray:
        return self.grid.inner(self.C, self.C)


def fbm_kernel_table(H: float, grid, times) -> FbmKernelTable:
    H = check_hurst(H)
    times = _check_times(grid, times)
    a = H - 0.5
    scale = fbm_constant(H) / gamma_fn(a) / a
    C = _backend.power_incr_avg(a, grid.boundaries, np.zeros_like(times), times) * scale
    C.setflags(write=False)
    return FbmKernelTable(H, grid, times, C)


@dataclass(frozen=True, eq=False)
class RosenblattKernelTable:
    H: float
    grid: object
    times: np.ndarray
    quad: TimeQuadrature
    V: np.ndarray  # (S, G) cell averages of (s_m - x)_+^(H/2-1) / Gamma(H/2)
    d: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def omega(self) -> np.ndarray:
        return self.quad.weights

    def n_before(self, t: float) -> int:
        return self.quad.count_before(t)

    def time_index_nodes(self) -> np.ndarray:
        """Node counts n_k = #{s_m < t_k} for every path time."""
        return np.array([self.n_before(t) for t in self.times])

    @property
    def vnorm2(self) -> np.ndarray:
        if "vnorm2" not in self._cache:
            self._cache["vnorm2"] = (self.V**2) @ self.grid.widths
        return self._cache["vnorm2"]

    def gram(self) -> np.ndarray:
        """Node-space Gram matrix V W V^T (S x S)."""
        if "gram" not in self._cache:
            self._cache["gram"] = (self.V * self.grid.widths) @ self.V.T
        return self._cache["gram"]

    def dense(self, t: float) -> np.ndarray:
        """Dense Q_t; only for small grids."""
        n = self.n_before(t)
        Vn = self.V[:n]
        Q = self.d * (Vn.T * self.omega[:n]) @ Vn
        # BLAS need not round (i, j) and (j, i) alike
        return 0.5 * (Q + Q.T)

    def compensator(self, t: float) -> float:
        """h tr(Q_t), i.e. sum_i w_i Q_t,ii."""
        n = self.n_before(t)
        return self.d * float(self.omega[:n] @ self.vnorm2[:n])

    def variance(self, t: float) -> float:
        """2 sum_ij w_i w_j Q_t,ij^2 evaluated in node space."""
        n = self.n_before(t)
        Gm = self.gram()[:n, :n]
        om = self.omega[:n]
        return 2 * self.d**2 * float(om @ (Gm**2) @ om)

    def third_cumulant(self, t: float) -> float:
        """8 tr((W Q_t)^3) evaluated in node space."""
        n = self.n_before(t)
        so = np.sqrt(self.omega[:n])
        Am = so[:, None] * self.gram()[:n, :n] * so[None, :]
        return 8 * self.d**3 * float(np.sum((Am @ Am) * Am))


def rosenblatt_kernel_table(H: float, grid, times, nq: int = 3, max_entries: float = 4e8) -> RosenblattKernelTable:
    H = check_hurst(H)
    times = _check_times(grid, times)
    quad = TimeQuadrature.build(grid, times, nq)
    if quad.size * grid.cell_count > max_entries:
        raise BudgetError(
            f"Rosenblatt table needs {quad.size} x {grid.cell_count} entries (limit {max_entries:.0f})",
            bound=quad.size * grid.cell_count,
        )
    g = H / 2 - 1
    V = _backend.power_avg(g, grid.boundaries, quad.nodes) / gamma_fn(H / 2)
    V.setflags(write=False)
    return RosenblattKernelTable(H, grid, times, quad, V, rosenblatt_constant(H))


# ------------------------------------------------------------- trace kernels


def K0(H: float, s, r):
    return np.abs(np.asarray(s) - np.asarray(r)) ** (H - 1.0)


def K1(H: float, t: float, s: float, r: float, epsrel: float = 1e-12) -> float:
    """int_0^t |s-u|^(H-1) |r-u|^(H-1) du."""
    e = H - 1.0
    return power_product_integral(0.0, t, [s, r], [e, e], epsrel=epsrel)


def K1_closed_diag(H: float, t: float, s: float) -> float:
    """K_t^1(s, s) for s >= t in closed form."""
    if s < t:
        return (s ** (2 * H - 1) + (t - s) ** (2 * H - 1)) / (2 * H - 1)
    return (s ** (2 * H - 1) - (s - t) ** (2 * H - 1)) / (2 * H - 1)


def _inner_right(H: float, u, r: float):
    """J_r(u) = int_0^1 |u - v|^(H-1) (r - v)^(H-1) dv for 0 <= u <= 1 <= r.

    Closed form: the part v > u is an incomplete Beta function, the part
    v < u a Gauss hypergeometric function after v -> y = (u - v) / (r - v).
    Euler's transformation puts the latter in the form 2F1(1, 1-H; 1+H; u/r),
    which stays finite up to u = r.
    """
    e = H - 1.0
    u = np.asarray(u, dtype=float)
    c = r - u
    with np.errstate(divide="ignore", invalid="ignore"):
        right = c ** (2 * e + 1) * _beta(H, H) * betainc(H, H, np.clip((1.0 - u) / c, 0.0, 1.0))
    right = np.where(c <= 0, 0.0, right)
    left = r ** (2 * H - 1) * (u / r) ** H / H * hyp2f1(1.0, 1.0 - H, H + 1.0, u / r)
    return left + right


def K2(H: float, t: float, s: float, r: float, epsrel: float = 1e-10) -> float:
    """int_0^t int_0^t |s-u|^(H-1) |u-v|^(H-1) |v-r|^(H-1) dv du.

    When s, r >= t the scaling K_t^2(s, r) = t^(3H-1) K_1^2(s/t, r/t) reduces
    everything to the unit interval, where the inner v-integral has a closed
    form and only the outer u-integral is adaptive.  Otherwise both integrals
    are adaptive, split at every singular point.
    """
    e = H - 1.0
    if t <= 0:
        return 0.0
    if s >= t and r >= t:
        ss, rr = s / t, r / t
        if ss < rr:
            ss, rr = rr, ss
        val = power_product_integral(0.0, 1.0, [ss], [e], g=lambda u: float(_inner_right(H, u, rr)), epsrel=epsrel)
        return t ** (3 * H - 1) * val

    def inner(u):
        return power_product_integral(0.0, t, [u, r], [e, e], epsrel=epsrel * 1e-2)

    return power_product_integral(0.0, t, [s, r], [e, 0.0], g=inner, epsrel=epsrel)


def K2_nested(H: float, t: float, s: float, r: float, epsrel: float = 1e-9) -> float:
    """Fully nested adaptive K2 (reference route, slow)."""
    e = H - 1.0

    def inner(u):
        return power_product_integral(0.0, t, [u, r], [e, e], epsrel=epsrel * 1e-2)

    return power_product_integral(0.0, t, [s, r], [e, 0.0], g=inner, epsrel=epsrel)


def K2_diag_scaled(H: float, t: float, sigma: float, epsrel: float = 1e-10) -> float:
    """K_t^2(sigma t, sigma t) through the scaling K_t^2 = t^(3H-1) K_1^2."""
    return t ** (3 * H - 1) * K2(H, 1.0, sigma, sigma, epsrel=epsrel)


def triple_cyclic_integral(H: float, epsrel: float = 1e-11) -> float:
    """int_[0,1]^3 |x1-x2|^(H-1) |x2-x3|^(H-1) |x3-x1|^(H-1) dx, adaptively.

    The cube is six copies of the ordered simplex x1 < x2 < x3.  On the
    simplex we use x1 = a, x3 = a + L, x2 = a + L y, which moves every
    singularity onto a face: the integrand becomes L^(3H-2) y^(H-1) (1-y)^(H-1)
    and each of the three nested integrals carries its singularity as an
    algebraic end-point weight.
    """
    e = H - 1.0

    def over_y(a, L):
        v, _ = integrate.quad(lambda y: 1.0, 0.0, 1.0, weight="alg", wvar=(e, e), epsabs=0.0, epsrel=epsrel)
        return v

    def over_L(a):
        if a >= 1.0:
            return 0.0
        v, _ = integrate.quad(
            lambda L: over_y(a, L), 0.0, 1.0 - a, weight="alg", wvar=(3 * e + 1, 0.0), epsabs=0.0, epsrel=epsrel
        )
        return v

    val, _ = integrate.quad(over_L, 0.0, 1.0, epsabs=0.0, epsrel=epsrel, limit=200)
    return 6.0 * val


def K2_unit_closed(H: float) -> float:
    """Closed form K_1^2(1, 1) = 2 B(H, H) / (3H - 1).

    Obtained by integrating out the outermost variable of the ordered triple
    integral, which leaves two Beta integrals.
    """
    return 2.0 * _beta(H, H) / (3 * H - 1)


@functools.lru_cache(maxsize=64)
def kappa3(H: float, method: str = "triple") -> float:
    """Third cumulant of X_1: (8/H) (H(2H-1)/2)^(3/2) K_1^2(1, 1).

    ``method`` selects how K_1^2(1, 1) is obtained: "triple" (H times the
    cyclic triple integral), "reduced" (the two-dimensional K2 evaluator) or
    "closed" (Beta-function closed form).
    """
    H = check_hurst(H)
    if method == "triple":
        k = H * triple_cyclic_integral(H)
    elif method == "reduced":
        k = K2(H, 1.0, 1.0, 1.0)
    elif method == "closed":
        k = K2_unit_closed(H)
    else:
        raise ConfigError(f"unknown kappa3 method {method!r}")
    return 8.0 / H * (H * (2 * H - 1) / 2) ** 1.5 * k


# ----------------------------------------------------------------- l and e


def _cell_avg_at(u: float, lo: float, hi: float, g: float) -> float:
    q = g + 1.0
    return (max(u - lo, 0.0) ** q - max(u - hi, 0.0) ** q) / (q * (hi - lo))


def l_kernel(H: float, s: float, t: float, grid, epsrel: float = 1e-10) -> np.ndarray:
    """Cell averages of l_{s,t}(x) = int_0^t (u - x)_+^(H/2-1) |s - u|^(H-1) du.

    The x-average is exact; the u-integral is adaptive, split at s and at the
    cell end points.  Cost is one quadrature per cell, so this is the
    reference route; ``l_table`` is the fast one.
    """
    H = check_hurst(H)
    g = H / 2 - 1
    out = np.zeros(grid.cell_count)
    if t <= 0:
        return out
    b = grid.boundaries
    for i in range(grid.cell_count):
        lo, hi = b[i], b[i + 1]
        if lo >= t:
            break
        start = max(lo, 0.0)
        out[i] = power_product_integral(
            start, t, [s, lo, hi], [H - 1.0, 0.0, 0.0],
            g=lambda u, lo=lo, hi=hi: _cell_avg_at(u, lo, hi, g), epsrel=epsrel,
        )
    return out


def l_table(table: RosenblattKernelTable, s_points, t_points) -> np.ndarray:
    """Rows l_{s,t} for paired (s, t), from the table's time nodes.

    l_{s,t} = Gamma(H/2) sum_{u_m < t} omega_m |s - u_m|^(H-1) v_m; each t
    must be a breakpoint of the table's quadrature.
    """
    H = table.H
    s_points = np.atleast_1d(np.asarray(s_points, dtype=float))
    t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
    nodes, om = table.quad.nodes, table.omega
    Wt = np.zeros((s_points.size, nodes.size))
    for k, (s, t) in enumerate(zip(s_points, t_points)):
        n = table.n_before(t)
        Wt[k, :n] = om[:n] * np.abs(s - nodes[:n]) ** (H - 1.0)
    return gamma_fn(H / 2) * (Wt @ table.V)


def e_kernel_diag(H: float, t: float, grid, l=None):
    """Rank-1 factors (l_{t,t}, l_{t,t}) of e_{t,t}(x1, x2)."""
    if l is None:
        l = l_kernel(H, t, t, grid)
    return l, l


def e_kernel_dense(H: float, t: float, grid, u_nodes: int = 400) -> np.ndarray:
    """Dense e_{t,t} by direct u-quadrature of the double integral (tiny grids).

    e(x1, x2) = int_0^t int_0^t (u-x1)_+^g (v-x2)_+^g |t-u|^(H-1) |t-v|^(H-1) du dv,
    evaluated with a graded Gauss rule in each variable; used only to confirm
    that the rank-1 factorization reproduces the double integral.
    """
    g = H / 2 - 1
    quad = TimeQuadrature.build(grid, np.linspace(0, t, 2), nq=max(3, u_nodes // 50))
    P = _backend.power_avg(g, grid.boundaries, quad.nodes)
    w = quad.weights * np.abs(t - quad.nodes) ** (H - 1.0)
    return np.einsum("m,mi,n,nj->ij", w, P, w, P)


# ------------------------------------------------------------------ caching

_MAGIC = b"FWDWICK1"


def table_key(kind: str, H: float, grid, times) -> str:
    return f"{kind}-H{H:.17g}-{grid.digest}-{_time_key(times)}"


def save_table(path, table) -> Path:
    """Binary cache: magic, u32 header length, JSON header, float64 arrays.

    Arrays follow the header in the order listed under "arrays", each
    row-major little-endian float64 with the stated shape.
    """
    path = Path(path)
    if isinstance(table, FbmKernelTable):
        kind, arrays = "fbm", {"boundaries": table.grid.boundaries, "times": table.times, "C": table.C}
        extra = {}
    elif isinstance(table, RosenblattKernelTable):
        kind = "rosenblatt"
        arrays = {
            "boundaries": table.grid.boundaries,
            "times": table.times,
            "nodes": table.quad.nodes,
            "weights": table.quad.weights,
            "breakpoints": table.quad.breakpoints,
            "V": table.V,
        }
        extra = {"nq": table.quad.nq, "d": table.d}
    else:
        raise TypeError("unsupported table type")
    header = {
        "kind": kind,
        "H": table.H,
        "grid_kind": table.grid.kind,
        "core_spacing": table.grid.core_spacing,
        "grid_digest": table.grid.digest,
        "times_digest": _time_key(table.times),
        "arrays": [[k, list(np.shape(v))] for k, v in arrays.items()],
        **extra,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return path


def load_table(path):
    from .noise_grid import NoiseGrid

    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ConfigError(f"{path} is not a kernel cache file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    grid = NoiseGrid(arrays["boundaries"], kind=header["grid_kind"], core_spacing=header["core_spacing"])
    if header["kind"] == "fbm":
        return FbmKernelTable(header["H"], grid, arrays["times"], arrays["C"])
    segs = np.repeat(np.arange(arrays["breakpoints"].size - 1), 2 * header["nq"])
    quad = TimeQuadrature(arrays["breakpoints"], arrays["nodes"], arrays["weights"], segs, header["nq"])
    return RosenblattKernelTable(header["H"], grid, arrays["times"], quad, arrays["V"], header["d"])
