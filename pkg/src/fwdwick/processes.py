"""fBm and Rosenblatt sample paths built from white-noise samples.

Both evaluators accept either a ``WhiteNoiseSample`` or a raw noise array of
shape (G,) or (R, G); batched input returns one path per row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .kernels import FbmKernelTable, RosenblattKernelTable, fbm_kernel_table, rosenblatt_kernel_table
from .noise_grid import WhiteNoiseSample, standard_normals


@dataclass(frozen=True, eq=False)
class ProcessRep:
    kind: str
    table: FbmKernelTable | RosenblattKernelTable

    @property
    def times(self) -> np.ndarray:
        return self.table.times

    @property
    def grid(self):
        return self.table.grid

    @property
    def H(self) -> float:
        return self.table.H


def make_rep(kind: str, H: float, grid, times, nq: int = 3) -> ProcessRep:
    if kind == "fbm":
        return ProcessRep("fbm", fbm_kernel_table(H, grid, times))
    if kind == "rosenblatt":
        return ProcessRep("rosenblatt", rosenblatt_kernel_table(H, grid, times, nq=nq))
    raise ConfigError(f"unknown process kind {kind!r}")


def _noise(rep: ProcessRep, sample) -> np.ndarray:
    xi = sample.xi if isinstance(sample, WhiteNoiseSample) else np.asarray(sample, dtype=float)
    if xi.shape[-1] != rep.grid.cell_count:
        raise ShapeError(f"noise has {xi.shape[-1]} cells, representation expects {rep.grid.cell_count}")
    return xi


def fbm_path(rep: ProcessRep, sample) -> np.ndarray:
    """B_t = sum_i (c_t)_i xi_i at every time of the representation."""
    if rep.kind != "fbm":
        raise ConfigError("fbm_path needs an fbm representation")
    return _noise(rep, sample) @ rep.table.C.T


@dataclass(frozen=True, eq=False)
class RosenblattState:
    """Node projections y_m = v_m . xi and the path values X_{t_k}."""

    y: np.ndarray
    X: np.ndarray


def rosenblatt_state(rep: ProcessRep, sample) -> RosenblattState:
    if rep.kind != "rosenblatt":
        raise ConfigError("rosenblatt_path needs a rosenblatt representation")
    tab: RosenblattKernelTable = rep.table
    xi = _noise(rep, sample)
    y = xi @ tab.V.T
    z = tab.d * tab.omega * (y * y - tab.vnorm2)
    csum = np.cumsum(z, axis=-1)
    n = tab.time_index_nodes()
    X = np.where(n > 0, np.take(csum, np.maximum(n - 1, 0), axis=-1), 0.0)
    return RosenblattState(y, X)


def rosenblatt_path(rep: ProcessRep, sample) -> np.ndarray:
    """X_t = xi^T Q_t xi - h tr(Q_t) at every time of the representation."""
    return rosenblatt_state(rep, sample).X


def path(rep: ProcessRep, sample) -> np.ndarray:
    return fbm_path(rep, sample) if rep.kind == "fbm" else rosenblatt_path(rep, sample)


def fbm_covariance(H: float, s, t):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def fbm_exact_oracle(H: float, times, seed: int, replicates: int = 1) -> np.ndarray:
    """Centred Gaussian paths with the exact fBm covariance (Cholesky).

    Accepts H in (0, 1) so that H = 1/2 (Brownian motion) can serve as a
    code check.  Rows are replicates, drawn from the same per-replicate
    streams as the white noise.
    """
    if not 0 < H < 1:
        raise ConfigError("H must lie in (0, 1)")
    times = np.asarray(times, dtype=float)
    pos = times > 0
    tp = times[pos]
    cov = fbm_covariance(H, tp[:, None], tp[None, :])
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        ev = np.linalg.eigvalsh(cov).min()
        raise np.linalg.LinAlgError(f"covariance not positive definite (smallest eigenvalue {ev:.3e})") from exc
    out = np.zeros((replicates, times.size))
    for r in range(replicates):
        out[r, pos] = L @ standard_normals(seed, r, tp.size)
    return out


def holder_probe(path, times, exponents) -> np.ndarray:
    """max over pairs s < t of |X_t - X_s| / |t - s|^eta, one value per eta."""
    x = np.asarray(path, dtype=float)
    t = np.asarray(times, dtype=float)
    iu = np.triu_indices(t.size, 1)
    dx = np.abs(x[:, None] - x[None, :])[iu]
    dt = np.abs(t[:, None] - t[None, :])[iu]
    return np.array([float(np.max(dx / dt**eta)) if dx.size else 0.0 for eta in np.atleast_1d(exponents)])


def holder_refinement(paths_by_level, times_by_level, exponents) -> dict:
    """Mean probe ratio per refinement level and its growth from first to last.

    ``paths_by_level[j]`` has shape (R, M_j).  A ratio counts as bounded when
    it changes by less than a factor 2 between the coarsest and finest level.
    """
    means = []
    for P, T in zip(paths_by_level, times_by_level):
        means.append(np.mean([holder_probe(p, T, exponents) for p in np.atleast_2d(P)], axis=0))
    means = np.array(means)
    growth = means[-1] / np.where(means[0] > 0, means[0], 1.0)
    return {"means": means, "growth": growth, "bounded": growth < 2.0}


def path_batch(rep: ProcessRep, master_seed: int, replicates: int, chunk: int = 500) -> np.ndarray:
    """(R, M) paths, computed in replicate-aligned chunks."""
    from .noise_grid import sample_noise_batch

    out = np.empty((replicates, rep.times.size))
    for s in range(0, replicates, chunk):
        e = min(s + chunk, replicates)
        out[s:e] = path(rep, sample_noise_batch(rep.grid, master_seed, range(s, e)))
    return out


def exact_grid_variance(rep: ProcessRep) -> np.ndarray:
    """Variance of the grid process at every time (no Monte Carlo)."""
    if rep.kind == "fbm":
        return rep.table.variance()
    return np.array([rep.table.variance(t) for t in rep.times])


def moment_rows(paths, times, H: float, kind: str, kappa3: float | None = None, bias_tol: float = 0.02):
    """Variance, covariance and (Rosenblatt) third-cumulant checks of sample paths.

    Each row is a dict with keys stat, s, t, value, se, target, pass.  Means
    are removed before forming products; standard errors come from the
    sample variance of the products.
    """
    X = np.asarray(paths, dtype=float)
    R = X.shape[0]
    Xc = X - X.mean(axis=0)
    rows = []
    times = np.asarray(times, dtype=float)
    pos = np.flatnonzero(times > 0)
    for i in pos:
        for j in pos:
            if j < i:
                continue
            prod = Xc[:, i] * Xc[:, j]
            val = float(prod.sum() / (R - 1))
            se = float(prod.std(ddof=1) / np.sqrt(R))
            target = float(fbm_covariance(H, times[i], times[j]))
            ok = abs(val - target) <= 3 * se + bias_tol * abs(target)
            rows.append({"stat": "var" if i == j else "cov", "s": times[i], "t": times[j],
                         "value": val, "se": se, "target": target, "pass": ok})
    if kind == "rosenblatt" and kappa3 is not None:
        for i in pos:
            c3 = Xc[:, i] ** 3
            val = float(c3.mean() * R * R / ((R - 1) * (R - 2)))
            se = float(c3.std(ddof=1) / np.sqrt(R))
            target = kappa3 * times[i] ** (3 * H)
            rows.append({"stat": "kappa3", "s": times[i], "t": times[i], "value": val, "se": se,
                         "target": target, "pass": abs(val - target) <= 5 * se})
    return rows
