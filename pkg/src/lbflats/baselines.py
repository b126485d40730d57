"""K-flats with random or farthest-insertion initialization."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from lbflats._random import derive_int, derive_rng
from lbflats.geometry import FlatKind, as_points, best_fit_flat, distance_matrix
from lbflats.lbf import ClusteringResult
from lbflats.scale import ScaleConfig, nearest_order, select_neighborhood

# Adaptive neighborhoods for farthest insertion search sizes 10, 20, ..., 160.
ADAPTIVE_INIT_SCALE = ScaleConfig(start_size=10, step=10, max_size=160)


class Init(str, enum.Enum):
    RANDOM = "random"
    FARTHEST_FIXED = "farthest-fixed"
    FARTHEST_ADAPTIVE = "farthest-adaptive"


@dataclass(frozen=True)
class KFlatsConfig:
    d: int
    K: int
    kind: FlatKind = FlatKind.AFFINE
    max_iters: int = 100
    tol: float = 1e-8
    init: Init = Init.RANDOM
    init_size: int | None = None  # m for Init.FARTHEST_FIXED
    init_scale: ScaleConfig = field(default=ADAPTIVE_INIT_SCALE)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", FlatKind.parse(self.kind))
        object.__setattr__(self, "init", Init(self.init))
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.init is Init.FARTHEST_FIXED and self.init_size is None:
            raise ValueError("fixed farthest insertion needs init_size")


def random_init(X, d: int, K: int, kind=FlatKind.AFFINE, rng=None) -> list:
    """Flats fitted to a uniformly random partition of the points."""
    pts = as_points(X)
    rng = rng if rng is not None else derive_rng(0, "random-init")
    labels = rng.integers(0, K, size=pts.shape[0])
    flats = []
    for k in range(K):
        members = pts[labels == k]
        if members.shape[0] == 0:
            members = pts[rng.integers(0, pts.shape[0], size=d + 1)]
        flats.append(best_fit_flat(members, d, kind))
    return flats


def farthest_insertion_init(X, d: int, K: int, neighborhood, kind=FlatKind.AFFINE, rng=None, return_seeds=False):
    """Geometric farthest insertion.

    Start from a random point, fit a flat to its neighborhood, then repeatedly
    seed at the data point farthest from all flats so far. ``neighborhood`` is
    either a fixed neighbor count ``m`` or a :class:`ScaleConfig` for adaptive
    beta_2 selection.
    """
    kind = FlatKind.parse(kind)
    pts = as_points(X)
    N = pts.shape[0]
    if isinstance(neighborhood, ScaleConfig):
        adaptive = True
    else:
        adaptive = False
        m = int(neighborhood)
        if m < d + 1:
            raise ValueError(f"neighborhood size {m} below d + 1 = {d + 1}")
        if N < m:
            raise ValueError(f"neighborhood size {m} exceeds data ({N})")
    rng = rng if rng is not None else derive_rng(0, "farthest-insertion")

    seeds = [int(rng.integers(N))]
    flats = []
    nearest = np.full(N, np.inf)
    while True:
        x = pts[seeds[-1]]
        if adaptive:
            idx = select_neighborhood(pts, x, d, neighborhood, kind).neighbor_indices
        else:
            idx = nearest_order(pts, x)[0][:m]
        flat = best_fit_flat(pts[idx], d, kind)
        flats.append(flat)
        if len(flats) == K:
            break
        nearest = np.minimum(nearest, distance_matrix(pts, [flat])[:, 0])
        score = nearest.copy()
        score[seeds] = -np.inf
        seeds.append(int(np.argmax(score)))
    return (flats, seeds) if return_seeds else flats


def kflats(X, cfg: KFlatsConfig, init_flats=None, rng=None) -> ClusteringResult:
    """Lloyd-style K-flats: assign to the nearest flat, refit each cluster, repeat.

    Stops when labels no longer change, when the relative l2-energy decrease
    drops below ``cfg.tol``, or after ``cfg.max_iters`` refits. An empty
    cluster is reseeded around the point currently farthest from its flat.
    """
    pts = as_points(X)
    N = pts.shape[0]
    rng = rng if rng is not None else derive_rng(cfg.seed, "kflats")
    t0 = time.perf_counter()
    if init_flats is None:
        init_flats = initial_flats(pts, cfg, rng)
    flats = list(init_flats)
    if len(flats) != cfg.K:
        raise ValueError(f"expected {cfg.K} initial flats, got {len(flats)}")

    dist = distance_matrix(pts, flats)
    labels = np.argmin(dist, axis=1)
    mins = dist[np.arange(N), labels]
    energy = float(np.sum(mins**2))
    trace = [energy]
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        reseeded = set()
        for k in range(cfg.K):
            members = labels == k
            if members.any():
                flats[k] = best_fit_flat(pts[members], cfg.d, cfg.kind)
                continue
            order = np.argsort(-mins, kind="stable")
            far = next(int(i) for i in order if int(i) not in reseeded)
            reseeded.add(far)
            size = min(N, cfg.d + 2)
            flats[k] = best_fit_flat(pts[nearest_order(pts, pts[far])[0][:size]], cfg.d, cfg.kind)
        dist = distance_matrix(pts, flats)
        new_labels = np.argmin(dist, axis=1)
        mins = dist[np.arange(N), new_labels]
        new_energy = float(np.sum(mins**2))
        trace.append(new_energy)
        unchanged = np.array_equal(new_labels, labels)
        labels = new_labels
        if unchanged or energy - new_energy <= cfg.tol * max(energy, np.finfo(float).tiny):
            break
        energy = new_energy

    return ClusteringResult(
        flats=flats,
        labels=labels,
        distances=mins,
        l1_energy=float(mins.sum()),
        l2_energy=float(np.sum(mins**2)),
        elapsed=time.perf_counter() - t0,
        energy_trace=trace,
        iterations=iterations,
    )


def initial_flats(X, cfg: KFlatsConfig, rng) -> list:
    if cfg.init is Init.RANDOM:
        return random_init(X, cfg.d, cfg.K, cfg.kind, rng)
    if cfg.init is Init.FARTHEST_FIXED:
        return farthest_insertion_init(X, cfg.d, cfg.K, cfg.init_size, cfg.kind, rng)
    return farthest_insertion_init(X, cfg.d, cfg.K, cfg.init_scale, cfg.kind, rng)


def kflats_restarts(X, cfg: KFlatsConfig, restarts: int = 30) -> ClusteringResult:
    """Best of ``restarts`` independent K-flats runs by l2 energy."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    t0 = time.perf_counter()
    best = None
    for r in range(restarts):
        res = kflats(X, cfg, rng=derive_rng(derive_int(cfg.seed, "restart", r), "kflats"))
        if best is None or res.l2_energy < best.l2_energy:
            best = res
    best.elapsed = time.perf_counter() - t0
    return best
