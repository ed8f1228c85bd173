"""Discretized two-sided white noise.

A grid is a partition of [L, T] into cells; the noise assigns to cell i an
independent centred Gaussian increment xi_i with variance equal to the cell
width w_i.  Grid functions are per-cell averages, so a Wiener integral is
simply ``sum_i f_i xi_i`` and the L2 inner product is ``sum_i w_i f_i g_i``.

Two constructors are provided.  ``make_grid`` builds the plain uniform grid.
``make_graded_grid`` keeps a uniform core around the time window and lets the
cells grow geometrically towards the left cut, which is what makes the slowly
decaying Rosenblatt kernel tails affordable (see README, "Grids").
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import beta as _beta, gamma as _gamma

from .errors import ConfigError, ShapeError


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    boundaries: np.ndarray
    kind: str = "uniform"
    core_spacing: float = field(default=float("nan"))

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 3:
            raise ConfigError("a grid needs at least two cells")
        if not np.all(np.isfinite(b)):
            raise ConfigError("grid boundaries must be finite")
        if not np.all(np.diff(b) > 0):
            raise ConfigError("grid boundaries must be strictly increasing")
        if not (b[0] < 0 < b[-1]):
            raise ConfigError("grid must contain 0 in its interior")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        w = np.diff(b)
        w.setflags(write=False)
        object.__setattr__(self, "widths", w)
        c = 0.5 * (b[:-1] + b[1:])
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        if math.isnan(self.core_spacing):
            object.__setattr__(self, "core_spacing", float(w.max()))

    @property
    def left_cut(self) -> float:
        return float(self.boundaries[0])

    @property
    def right_end(self) -> float:
        return float(self.boundaries[-1])

    @property
    def cell_count(self) -> int:
        return self.boundaries.size - 1

    @property
    def spacing(self) -> float:
        """Uniform spacing h (for graded grids, the spacing of the core)."""
        return self.core_spacing

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.boundaries.tobytes()).hexdigest()[:16]

    def inner(self, f, g):
        """L2 inner product of grid functions (broadcasts over leading axes)."""
        return np.sum(np.asarray(f) * np.asarray(g) * self.widths, axis=-1)

    def indicator(self, lo: float, hi: float) -> np.ndarray:
        """Cell averages of the indicator of [lo, hi]."""
        b = self.boundaries
        overlap = np.clip(np.minimum(b[1:], hi) - np.maximum(b[:-1], lo), 0.0, None)
        return overlap / self.widths

    def contains(self, t: float) -> bool:
        return self.left_cut <= t <= self.right_end

    def is_boundary(self, t: float, rtol: float = 1e-12) -> bool:
        j = np.searchsorted(self.boundaries, t)
        near = self.boundaries[max(j - 1, 0) : j + 1]
        return bool(np.any(np.abs(near - t) <= rtol * max(1.0, abs(t))))


def make_grid(left_cut: float, right_end: float, cell_count: int) -> NoiseGrid:
    """Uniform grid of ``cell_count`` cells on [left_cut, right_end]."""
    if not (np.isfinite(left_cut) and np.isfinite(right_end)):
        raise ConfigError("grid bounds must be finite")
    if left_cut >= 0:
        raise ConfigError(f"left_cut must be negative, got {left_cut}")
    if right_end <= 0:
        raise ConfigError(f"right_end must be positive, got {right_end}")
    if int(cell_count) != cell_count or cell_count < 2:
        raise ConfigError(f"cell_count must be an integer >= 2, got {cell_count}")
    G = int(cell_count)
    h = (right_end - left_cut) / G
    b = left_cut + h * np.arange(G + 1)
    b[-1] = right_end
    return NoiseGrid(b, kind="uniform", core_spacing=h)


def make_graded_grid(
    core_spacing: float,
    right_end: float,
    left_cut: float,
    core_left: float = -1.0,
    tail_ratio: float = 1.05,
    tail_start: float = 1.0 / 32.0,
) -> NoiseGrid:
    """Uniform core on [core_left, right_end] plus a geometric left tail.

    The core spacing must divide ``right_end - core_left`` and 0 must be a
    core boundary.  Tail cells start at width ``tail_start`` and grow by
    ``tail_ratio`` until ``left_cut`` is reached.  The tail does not depend on
    the core spacing, so halving the spacing yields a nested refinement.
    """
    h = float(core_spacing)
    if not (h > 0 and np.isfinite(h)):
        raise ConfigError("core_spacing must be positive")
    if not (left_cut < core_left < 0 < right_end):
        raise ConfigError("need left_cut < core_left < 0 < right_end")
    if tail_ratio < 1.0 or tail_start <= 0:
        raise ConfigError("tail_ratio must be >= 1 and tail_start > 0")
    n_left = (0.0 - core_left) / h
    n_right = right_end / h
    if abs(n_left - round(n_left)) > 1e-9 or abs(n_right - round(n_right)) > 1e-9:
        raise ConfigError("core_spacing must divide both core_left and right_end")
    core = h * np.arange(-int(round(n_left)), int(round(n_right)) + 1)
    tail = []
    x, w = core[0], tail_start
    while x - w > left_cut:
        x -= w
        w *= tail_ratio
        tail.append(x)
    tail.append(left_cut)
    b = np.concatenate([np.array(tail[::-1]), core])
    return NoiseGrid(b, kind="graded", core_spacing=h)


def _kappa2(H):
    return H * (2 * H - 1) / 2


def tail_bound(H: float, process: str, left_cut: float, t: float = 1.0) -> float:
    """Upper bound on the share of Var(X_t) carried by cells left of ``left_cut``.

    fbm:        A^2 / Gamma(H-1/2)^2 * r^(2H-2) / (2-2H)
    rosenblatt: 8 k2 / beta(H/2, 1-H) * r^(H-1) / ((1-H) H (H+1)),  k2 = H(2H-1)/2

    with r = |left_cut| / t.  Both follow from bounding the kernel factor
    attached to the far variable by its value at s = 0.
    """
    r = abs(left_cut) / t
    if process == "fbm":
        a2 = _gamma(H - 0.5) * H * (2 * H - 1) * _gamma(1.5 - H) / _gamma(2 - 2 * H)
        return a2 / _gamma(H - 0.5) ** 2 * r ** (2 * H - 2) / (2 - 2 * H)
    if process == "rosenblatt":
        c = 8 * _kappa2(H) / _beta(H / 2, 1 - H) / ((1 - H) * H * (H + 1))
        return c * r ** (H - 1)
    raise ConfigError(f"unknown process {process!r}")


def required_left_cut(H: float, process: str, budget: float, t: float = 1.0) -> float:
    """Left cut at which ``tail_bound`` equals ``budget`` (returned negative)."""
    if not 0 < budget < 1:
        raise ConfigError("tail budget must lie in (0, 1)")
    unit = tail_bound(H, process, -t, t)
    e = 2 * H - 2 if process == "fbm" else H - 1
    return -t * (budget / unit) ** (1.0 / e)


@dataclass(frozen=True, eq=False)
class WhiteNoiseSample:
    grid: NoiseGrid
    xi: np.ndarray
    master_seed: int
    replicate: int


def _generator(master_seed: int, replicate: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def standard_normals(master_seed: int, replicate: int, n: int) -> np.ndarray:
    return _generator(master_seed, replicate).standard_normal(n)


def sample_noise(grid: NoiseGrid, master_seed: int, replicate: int) -> WhiteNoiseSample:
    """Noise for one replicate; depends only on (master_seed, replicate)."""
    z = standard_normals(master_seed, replicate, grid.cell_count)
    xi = z * np.sqrt(grid.widths)
    xi.setflags(write=False)
    return WhiteNoiseSample(grid, xi, int(master_seed), int(replicate))


def sample_noise_batch(grid: NoiseGrid, master_seed: int, replicates: Iterable[int]) -> np.ndarray:
    """Stack of noise vectors, one row per replicate index."""
    reps = list(replicates)
    out = np.empty((len(reps), grid.cell_count))
    sw = np.sqrt(grid.widths)
    for k, r in enumerate(reps):
        out[k] = standard_normals(master_seed, r, grid.cell_count) * sw
    return out


def aggregate_noise(xi: np.ndarray, fine: NoiseGrid, coarse: NoiseGrid) -> np.ndarray:
    """Sum fine-cell increments into the cells of a nested coarser grid.

    This is the exact white noise of the coarse cells, so ladder rungs built
    this way share their randomness (common random numbers).
    """
    idx = np.searchsorted(fine.boundaries, coarse.boundaries)
    ok = np.abs(fine.boundaries[np.clip(idx, 0, fine.cell_count)] - coarse.boundaries)
    if idx[0] != 0 or idx[-1] != fine.cell_count or np.any(ok > 1e-9 * (1 + np.abs(coarse.boundaries))):
        raise ConfigError("coarse grid is not nested in the fine grid")
    return np.add.reduceat(np.asarray(xi), idx[:-1], axis=-1)


def wiener_integral(sample, f) -> float | np.ndarray:
    """sum_i f_i xi_i; ``sample`` may be a WhiteNoiseSample or a noise array."""
    xi = sample.xi if isinstance(sample, WhiteNoiseSample) else np.asarray(sample)
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != xi.shape[-1]:
        raise ShapeError(f"grid function has {f.shape[-1]} cells, noise has {xi.shape[-1]}")
    return xi @ f if f.ndim == 1 else f @ xi


def check_samples(xi: np.ndarray, grid: NoiseGrid) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != grid.cell_count:
        raise ShapeError(f"noise has {xi.shape[-1]} cells, grid has {grid.cell_count}")
    return xi

