"""Number of flats via the second-order-difference elbow of ``ln W_k``."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from lbflats._random import derive_int
from lbflats.geometry import FlatKind, as_points
from lbflats.lbf import CandidateCache, LbfConfig, lbf_cluster

DEFAULT_K_MAX = 10


@dataclass
class ElbowCurve:
    ks: np.ndarray
    W: np.ndarray
    sod: np.ndarray  # entries for k = 2 .. k_max - 1
    k_opt: int
    elapsed: float = 0.0

    def rows(self):
        """``(k, W_k, SOD_k or None)`` for every k."""
        sod = {int(k): float(v) for k, v in zip(self.ks[1:-1], self.sod)}
        return [(int(k), float(w), sod.get(int(k))) for k, w in zip(self.ks, self.W)]


def guard_energies(W, rel: float = 1e-12) -> np.ndarray:
    """Clamp each ``W_k`` to at least ``rel * W_1`` so logs stay finite on perfect fits."""
    W = np.asarray(W, dtype=float)
    return np.maximum(W, rel * W[0])


def sod_select(W) -> ElbowCurve:
    """Second differences of ``ln W`` and their argmax (ties to the smallest k)."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 1 or W.size < 3:
        raise ValueError("need at least three W values")
    if np.any(~np.isfinite(W)) or np.any(W <= 0):
        raise ValueError("degenerate energy: W values must be positive and finite")
    lw = np.log(W)
    sod = lw[:-2] + lw[2:] - 2.0 * lw[1:-1]
    ks = np.arange(1, W.size + 1)
    return ElbowCurve(ks, W, sod, int(ks[1 + int(np.argmax(sod))]))


def wk_curve(X, d: int, k_max: int = DEFAULT_K_MAX, template: LbfConfig | None = None, seed: int = 0) -> np.ndarray:
    """Mean squared distance to the LBF flats for ``k = 1 .. k_max``.

    Each ``k`` gets its own derived seed; local flats are shared between the
    runs through a candidate cache since they do not depend on ``k``.
    """
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    pts = as_points(X)
    template = template or LbfConfig(d=d, K=1)
    cache = CandidateCache(pts)
    W = np.empty(k_max)
    for k in range(1, k_max + 1):
        cfg = replace(template.with_k(k, seed=derive_int(seed, "k", k)), d=d)
        res = lbf_cluster(pts, cfg, cache=cache)
        W[k - 1] = res.l2_energy / pts.shape[0]
    return W


def select_model_order(X, d: int, k_max: int = DEFAULT_K_MAX, kind: FlatKind | str = FlatKind.AFFINE,
                       template: LbfConfig | None = None, seed: int = 0) -> ElbowCurve:
    """Estimate the number of flats; the returned curve keeps the raw ``W`` values."""
    t0 = time.perf_counter()
    template = template or LbfConfig(d=d, K=1, kind=kind)
    W = wk_curve(X, d, k_max, template, seed)
    curve = sod_select(guard_energies(W))
    curve.W = W
    curve.elapsed = time.perf_counter() - t0
    return curve
