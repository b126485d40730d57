"""Hybrid linear modeling by randomized local best-fit flats.

Candidates are best-fit flats of automatically sized neighborhoods around
random seeds; ``K`` of them are then picked greedily to minimize the l1
energy (sum of distances of each point to its nearest flat).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from lbflats import kernels
from lbflats._random import derive_rng
from lbflats.geometry import (
    Flat,
    FlatKind,
    as_points,
    best_fit_flats,
    distance_matrix,
)
from lbflats.scale import ScaleConfig, ScaleProfile, select_neighborhoods

CANDIDATES_PER_CLUSTER = 70
PASSES_PER_CLUSTER = 3


@dataclass(frozen=True)
class LbfConfig:
    """LBF tunables. ``C`` and ``p`` default to ``70*K`` and ``3*K``."""

    d: int
    K: int
    C: int | None = None
    p: int | None = None
    kind: FlatKind = FlatKind.AFFINE
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    seed: int = 0
    keep_profiles: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", FlatKind.parse(self.kind))
        if self.C is None:
            object.__setattr__(self, "C", CANDIDATES_PER_CLUSTER * self.K)
        if self.p is None:
            object.__setattr__(self, "p", PASSES_PER_CLUSTER * self.K)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.K >= self.C:
            raise ValueError(f"need K < C (got K={self.K}, C={self.C})")
        if self.p < 1:
            raise ValueError("pass count p must be >= 1")
        if self.d < 0:
            raise ValueError("flat dimension must be >= 0")

    @classmethod
    def variant(cls, name: str, **kw) -> "LbfConfig":
        """``"lbf"`` is the plain method; ``"lbfms"`` adds mean-shifted seeds
        (10 neighbors, 5 shifts) and lets the first scale count as a minimum."""
        name = name.lower()
        scale = kw.pop("scale", None) or ScaleConfig()
        if name == "lbfms":
            scale = replace(scale, mean_shift=True, mean_shift_neighbors=10, mean_shift_iters=5,
                            allow_first_scale_min=True)
        elif name != "lbf":
            raise ValueError(f"unknown LBF variant {name!r}")
        return cls(scale=scale, **kw)

    def with_k(self, K: int, seed: int | None = None) -> "LbfConfig":
        """Same settings for a different cluster count; ``C``/``p`` follow the per-cluster defaults."""
        return replace(self, K=K, C=CANDIDATES_PER_CLUSTER * K, p=PASSES_PER_CLUSTER * K,
                       seed=self.seed if seed is None else seed)

    def to_dict(self) -> dict:
        s = self.scale
        return {
            "d": self.d, "K": self.K, "C": self.C, "p": self.p, "kind": self.kind.value, "seed": self.seed,
            "scale": {
                "start_size": s.start_size, "step": s.step, "mean_shift": s.mean_shift,
                "mean_shift_neighbors": s.mean_shift_neighbors, "mean_shift_iters": s.mean_shift_iters,
                "allow_first_scale_min": s.allow_first_scale_min, "max_size": s.max_size,
            },
        }


@dataclass
class ClusteringResult:
    flats: list
    labels: np.ndarray
    distances: np.ndarray
    l1_energy: float
    l2_energy: float
    elapsed: float = 0.0
    profiles: list | None = None
    active: np.ndarray | None = None
    energy_trace: list = field(default_factory=list)
    iterations: int = 0

    @property
    def mean_l1(self) -> float:
        return self.l1_energy / len(self.labels)

    @property
    def mean_l2(self) -> float:
        return self.l2_energy / len(self.labels)

    @property
    def empty_clusters(self) -> list[int]:
        counts = np.bincount(self.labels, minlength=len(self.flats))
        return [int(k) for k in np.flatnonzero(counts == 0)]


@dataclass
class Candidates:
    flats: list
    seed_indices: np.ndarray
    profiles: list
    dist: np.ndarray  # (N, C) point-to-candidate distances

    def __len__(self):
        return len(self.flats)

    def __getitem__(self, j):
        return self.flats[j]


class CandidateCache:
    """Memo of per-seed local flats for one data set.

    Scale selection is a deterministic function of the seed point, so runs
    over the same data (e.g. the ``k = 1..k_max`` sweep of model selection)
    can share results.
    """

    def __init__(self, X):
        self.points = as_points(X)
        self._store: dict = {}

    def get(self, i: int, d: int, kind: FlatKind, scale: ScaleConfig):
        return self.get_many([i], d, kind, scale)[0]

    def get_many(self, indices, d: int, kind: FlatKind, scale: ScaleConfig) -> list:
        """``(flat, profile, distance_column)`` per seed index, computing misses in one batch."""
        keys = [(int(i), d, kind, scale) for i in indices]
        missing = sorted({k[0] for k in keys if k not in self._store})
        if missing:
            pts = self.points
            profiles = select_neighborhoods(pts, pts[missing], d, scale, kind)
            flats = best_fit_flats([pts[pr.neighbor_indices] for pr in profiles], d, kind)
            dist = distance_matrix(pts, flats)
            for col, (i, flat, profile) in enumerate(zip(missing, flats, profiles)):
                self._store[(i, d, kind, scale)] = (flat, profile, dist[:, col].copy())
        return [self._store[k] for k in keys]

    def __len__(self):
        return len(self._store)


def _as_rng(rng, seed: int, label: str) -> np.random.Generator:
    if rng is None:
        return derive_rng(seed, label)
    if isinstance(rng, np.random.Generator):
        return rng
    return derive_rng(int(rng), label)


def generate_candidates(X, cfg: LbfConfig, rng=None, cache: CandidateCache | None = None) -> Candidates:
    """``cfg.C`` local best-fit flats around seeds drawn uniformly with replacement."""
    pts = as_points(X)
    start = cfg.scale.resolve_start(cfg.d, cfg.kind)
    if pts.shape[0] < start:
        raise ValueError(f"start size exceeds data ({start} > {pts.shape[0]})")
    if cache is None:
        cache = CandidateCache(pts)
    elif cache.points.shape != pts.shape:
        raise ValueError("candidate cache belongs to a different data set")
    rng = _as_rng(rng, cfg.seed, "candidates")
    seeds = rng.integers(0, pts.shape[0], size=cfg.C)
    flats, profiles = [], []
    dist = np.empty((pts.shape[0], cfg.C))
    for j, (flat, profile, column) in enumerate(cache.get_many(seeds, cfg.d, cfg.kind, cfg.scale)):
        flats.append(flat)
        profiles.append(profile)
        dist[:, j] = column
    return Candidates(flats, seeds, profiles, dist)


def l1_energy(X, flats) -> float:
    """Sum over points of the distance to the nearest flat."""
    flats = list(flats)
    if not flats:
        raise ValueError("empty flat list")
    return float(distance_matrix(X, flats).min(axis=1).sum())


@dataclass
class GreedyResult:
    active: np.ndarray
    energies: list  # energy before the first pass, then after each pass
    swaps: int

    @property
    def energy(self) -> float:
        return self.energies[-1]


def greedy_select(X, candidates, K: int, p: int, rng=None, *, dist=None, init=None, seed: int = 0) -> GreedyResult:
    """Greedy l1 selection of ``K`` among the candidate flats.

    Each pass frees one random active slot, scores every inactive candidate
    in it, and commits the best one only if it strictly lowers the energy.
    Slots are drawn as shuffled rounds so that each is revisited every ``K``
    passes.
    """
    flats = candidates.flats if isinstance(candidates, Candidates) else list(candidates)
    C = len(flats)
    if K >= C:
        raise ValueError(f"need K < C (got K={K}, C={C})")
    if p < 1:
        raise ValueError("pass count p must be >= 1")
    if dist is None:
        dist = candidates.dist if isinstance(candidates, Candidates) else distance_matrix(X, flats)
    dist = np.ascontiguousarray(dist, dtype=float)
    if rng is None:
        init_rng, pass_rng = derive_rng(seed, "init"), derive_rng(seed, "passes")
    else:
        init_rng = pass_rng = _as_rng(rng, seed, "greedy")

    if init is None:
        active = init_rng.choice(C, size=K, replace=False)
    else:
        active = np.array(init, dtype=np.int64)
        if active.shape != (K,) or len(set(active.tolist())) != K:
            raise ValueError("initial active set must hold K distinct candidate indices")
    active = np.asarray(active, dtype=np.int64)

    energies = [float(dist[:, active].min(axis=1).sum())]
    swaps = 0
    # Slots come in shuffled rounds: every pass frees a uniformly random slot,
    # but each round of K passes visits every slot once.
    order = np.concatenate([pass_rng.permutation(K) for _ in range(-(-p // K))])[:p]
    for slot in order.tolist():
        others = np.delete(active, slot)
        base = dist[:, others].min(axis=1) if K > 1 else np.full(dist.shape[0], np.inf)
        current = float(kernels.swap_scores(dist[:, active[slot : slot + 1]], base)[0])
        scores = kernels.swap_scores(dist, base)
        scores[active] = np.inf
        j = int(np.argmin(scores))
        if scores[j] < current:
            active[slot] = j
            swaps += 1
            energies.append(float(scores[j]))
        else:
            # keep the recorded value; re-summing in another order could drift by an ulp
            energies.append(energies[-1])
    return GreedyResult(active, energies, swaps)


def assign(X, flats):
    """Nearest-flat labels (ties to the lowest index) and distances."""
    dist = distance_matrix(X, flats)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(dist.shape[0]), labels]


def lbf_cluster(X, cfg: LbfConfig, cache: CandidateCache | None = None) -> ClusteringResult:
    """Full LBF run: candidates, greedy selection, nearest-flat partition."""
    pts = as_points(X)
    t0 = time.perf_counter()
    cands = generate_candidates(pts, cfg, derive_rng(cfg.seed, "candidates"), cache)
    greedy = greedy_select(pts, cands, cfg.K, cfg.p, seed=cfg.seed)
    cols = cands.dist[:, greedy.active]
    labels = np.argmin(cols, axis=1)
    distances = cols[np.arange(pts.shape[0]), labels]
    elapsed = time.perf_counter() - t0
    return ClusteringResult(
        flats=[cands.flats[j] for j in greedy.active],
        labels=labels,
        distances=distances,
        l1_energy=float(distances.sum()),
        l2_energy=float(np.sum(distances**2)),
        elapsed=elapsed,
        profiles=cands.profiles if cfg.keep_profiles else None,
        active=greedy.active,
        energy_trace=greedy.energies,
    )
