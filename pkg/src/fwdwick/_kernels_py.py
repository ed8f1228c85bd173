"""Pure numpy versions of the hot kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the
compiled extension is unavailable.
"""

import numpy as np


def _pos_pow(z, e):
    out = np.zeros_like(z)
    m = z > 0
    out[m] = z[m] ** e
    return out


def power_avg(q, bounds, s):
    """Cell averages of (s - x)_+^q, one row per point in ``s``."""
    bounds = np.asarray(bounds, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    q1 = q + 1.0
    P = _pos_pow(s[:, None] - bounds[None, :], q1) / q1
    return (P[:, :-1] - P[:, 1:]) / np.diff(bounds)[None, :]


def _pow_jump(q1, x, s0, s1):
    # (s1 - x)_+^q1 - (s0 - x)_+^q1 without cancellation for x << s0
    out = np.zeros(np.broadcast(x, s0, s1).shape)
    x, s0, s1 = np.broadcast_arrays(x, s0, s1)
    far = x < s0
    mid = (x >= s0) & (x < s1)
    r = s0[far] - x[far]
    out[far] = r ** q1 * np.expm1(q1 * np.log1p((s1[far] - s0[far]) / r))
    out[mid] = (s1[mid] - x[mid]) ** q1
    return out


def power_incr_avg(q, bounds, s0, s1):
    """Cell averages of (s1 - x)_+^q - (s0 - x)_+^q, rows follow (s0, s1)."""
    bounds = np.asarray(bounds, dtype=float)
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    q1 = q + 1.0
    J = _pow_jump(q1, bounds[None, :], s0[:, None], s1[:, None]) / q1
    return (J[:, :-1] - J[:, 1:]) / np.diff(bounds)[None, :]


def hermite_table(nmax, sigma2, x):
    """Rows H_0..H_nmax of the variance-sigma2 Hermite family at ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = x * out[n] - sigma2 * n * out[n - 1]
    return out
