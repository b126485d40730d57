"""Pure numpy implementations of the hot loops (fallback for the compiled core)."""
from __future__ import annotations

import numpy as np

_CHUNK = 16

# beta_2 values at or below this are numerically a perfect fit and count as 0.
ZERO_BETA = 1e-6


def first_local_minimum(betas, allow_first_min: bool = False):
    """Index picked by the neighborhood stop rule, or ``None`` if it never fires.

    Scanning ``k = 1, 2, ...`` the rule fires at the first ``k`` with
    ``betas[k-1] < min(betas[k-2], betas[k])`` and returns ``k - 1``. With
    ``allow_first_min`` the check at ``k = 1`` is ``betas[0] < betas[1]``.
    A run of exact zeros (perfect fits) ends at its last element as soon as
    the next value is positive.
    """
    b = np.asarray(betas, dtype=float)
    for k in range(1, b.size):
        if b[k - 1] == 0.0 and b[k] > 0.0:
            return k - 1
        if k == 1:
            if allow_first_min and b[0] < b[1]:
                return 0
        elif b[k - 1] < b[k - 2] and b[k - 1] < b[k]:
            return k - 1
    return None


def global_minimum(betas) -> int:
    """Index of the smallest value, ties to the largest index."""
    b = np.asarray(betas, dtype=float)
    return int(b.size - 1 - np.argmin(b[::-1]))


def beta2_scan(pts, sqrad, center, d, affine, start, step, stop_size, allow_first_min):
    """beta_2 of the nested neighborhoods ``pts[:start + k*step]``.

    ``pts`` must be ordered by distance to ``center`` and ``sqrad`` holds the
    matching squared distances. Evaluation stops one size past the first
    local minimum. Returns ``(betas, selected_index)``.
    """
    pts = np.asarray(pts, dtype=float)
    D = pts.shape[1]
    y = pts - center if affine else pts
    rmax = np.maximum.accumulate(np.asarray(sqrad, dtype=float)[:stop_size])
    sizes = np.arange(start, stop_size + 1, step)
    betas = np.empty(sizes.size)
    s1 = np.zeros(D)
    s2 = np.zeros((D, D))
    done = 0
    for lo in range(0, sizes.size, _CHUNK):
        chunk = sizes[lo : lo + _CHUNK]
        rows = y[done : chunk[-1]]
        c1 = s1 + np.cumsum(rows, axis=0)
        c2 = s2 + np.cumsum(rows[:, :, None] * rows[:, None, :], axis=0)
        idx = chunk - done - 1
        m2 = c2[idx]
        if affine:
            m1 = c1[idx]
            m2 = m2 - m1[:, :, None] * m1[:, None, :] / chunk[:, None, None]
        w = np.linalg.eigvalsh(m2)
        res = np.clip(w[:, : D - d], 0.0, None).sum(axis=1)
        r2 = rmax[chunk - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(r2 > 0, np.sqrt(res / (chunk * np.where(r2 > 0, r2, 1.0))), 0.0)
        hi = lo + chunk.size
        b = np.minimum(b, 1.0)
        b[b <= ZERO_BETA] = 0.0
        betas[lo:hi] = b
        s1 = c1[-1]
        s2 = c2[-1]
        done = int(chunk[-1])
        sel = first_local_minimum(betas[:hi], allow_first_min)
        if sel is not None:
            return betas[: sel + 2].copy(), sel
    return betas, global_minimum(betas)


def swap_scores(dist, base):
    """``out[j] = sum_i min(base[i], dist[i, j])``."""
    return np.minimum(dist, base[:, None]).sum(axis=0)


def sequential_sq_dists(pts, center):
    """Squared distances summed coordinate by coordinate, matching the compiled loop bit for bit."""
    diff = pts - center
    sq = np.zeros(pts.shape[0])
    for a in range(pts.shape[1]):
        sq += diff[:, a] * diff[:, a]
    return sq


def _ordered_prefix(sq, count):
    """Indices holding the ``count`` smallest of ``sq`` (plus ties), sorted by (value, index)."""
    n = sq.shape[0]
    if count >= n:
        return np.argsort(sq, kind="stable")
    kth = sq[np.argpartition(sq, count - 1)[count - 1]]
    idx = np.flatnonzero(sq <= kth)
    return idx[np.argsort(sq[idx], kind="stable")]


def scan_neighborhoods(pts, centers, d, affine, start, step, stop_size, allow_first_min):
    """Nearest-neighbor ordering and beta_2 scan for every row of ``centers``.

    Returns a list of ``(betas, selected_index, order)`` with ``order`` the
    neighbors consumed by the scan, nearest first (ties by index).
    """
    pts = np.asarray(pts, dtype=float)
    out = []
    for center in np.asarray(centers, dtype=float):
        sq = sequential_sq_dists(pts, center)
        # Most scans stop early; order a prefix first and only sort everything if it runs out.
        guess = min(stop_size, max(4 * start, 64))
        order = _ordered_prefix(sq, guess)
        limit = min(stop_size, start + step * ((order.shape[0] - start) // step))
        betas, sel = beta2_scan(pts[order[:limit]], sq[order[:limit]], center, d, affine,
                                start, step, limit, allow_first_min)
        if limit < stop_size and first_local_minimum(betas, allow_first_min) is None:
            order = _ordered_prefix(sq, stop_size)
            betas, sel = beta2_scan(pts[order[:stop_size]], sq[order[:stop_size]], center, d, affine,
                                    start, step, stop_size, allow_first_min)
        used = start + step * (len(betas) - 1)
        out.append((betas, sel, order[:used].copy()))
    return out
