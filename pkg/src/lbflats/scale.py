"""Neighborhood scale selection with discrete beta_2 numbers.

beta_2 of a neighborhood ``N`` around a center ``x0`` is the root of the
least-squares d-flat residual, normalized by ``|N|`` and the squared radius
``max ||x - x0||^2``. The selected neighborhood is the first strict local
minimum of beta_2 along the nested sizes ``S, S+T, S+2T, ...``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lbflats import kernels
from lbflats.geometry import FlatKind, GeometryError, as_points, best_fit_flat, residual_sum


@dataclass(frozen=True)
class ScaleConfig:
    """Tunables for neighborhood growth.

    ``start_size=None`` means the smallest size with a generically nonzero
    residual: ``d + 2`` for affine fits and ``d + 1`` for linear fits.
    ``max_size=None`` lets neighborhoods grow to the whole data set.
    """

    start_size: int | None = None
    step: int = 2
    mean_shift: bool = False
    mean_shift_neighbors: int = 10
    mean_shift_iters: int = 5
    allow_first_scale_min: bool = False
    max_size: int | None = None

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("step T must be >= 1")
        if self.mean_shift_neighbors < 1:
            raise ValueError("mean-shift neighbor count must be >= 1")
        if self.mean_shift_iters < 0:
            raise ValueError("mean-shift iteration count must be >= 0")
        if self.start_size is not None and self.start_size < 1:
            raise ValueError("start size must be positive")

    @staticmethod
    def min_start(d: int, kind: FlatKind | str) -> int:
        return d + 2 if FlatKind.parse(kind) is FlatKind.AFFINE else d + 1

    def resolve_start(self, d: int, kind: FlatKind | str) -> int:
        lowest = self.min_start(d, kind)
        if self.start_size is None:
            return lowest
        if self.start_size < lowest:
            raise ValueError(f"start size {self.start_size} below the minimum {lowest} for d={d}")
        return self.start_size


@dataclass(frozen=True)
class ScaleProfile:
    center: np.ndarray
    sizes: np.ndarray
    beta2_values: np.ndarray
    selected_index: int
    neighbor_indices: np.ndarray

    @property
    def selected_size(self) -> int:
        return int(self.sizes[self.selected_index])

    @property
    def selected_beta2(self) -> float:
        return float(self.beta2_values[self.selected_index])


def beta2(neighborhood, center, d: int, kind: FlatKind | str = FlatKind.AFFINE) -> float:
    """Scaled least-squares d-flat error of ``neighborhood`` around ``center``.

    Returns 0 when every point coincides with ``center``.
    """
    pts = as_points(neighborhood)
    if pts.shape[0] == 0:
        raise GeometryError("empty neighborhood")
    center = np.asarray(center, dtype=float)
    r2 = float(np.max(np.sum((pts - center) ** 2, axis=1)))
    if r2 == 0.0:
        return 0.0
    res = residual_sum(pts, best_fit_flat(pts, d, kind))
    return min(1.0, float(np.sqrt(res / (pts.shape[0] * r2))))


def _sq_dists(pts: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff = pts - x
    return np.einsum("ij,ij->i", diff, diff)


def nearest_order(pts: np.ndarray, x: np.ndarray, count: int | None = None, sq: np.ndarray | None = None):
    """Indices of ``pts`` by increasing distance to ``x`` (ties by index) and the sorted squared distances.

    With ``count`` only a prefix holding at least the ``count`` nearest points
    is ordered (all points tied with the ``count``-th are kept).
    """
    if sq is None:
        sq = _sq_dists(pts, x)
    n = sq.shape[0]
    if count is None or count >= n:
        order = np.argsort(sq, kind="stable")
        return order, sq[order]
    kth = sq[np.argpartition(sq, count - 1)[count - 1]]
    idx = np.flatnonzero(sq <= kth)
    order = idx[np.argsort(sq[idx], kind="stable")]
    return order, sq[order]


def mean_shift_center(X, x, ell: int, m: int) -> np.ndarray:
    """Move ``x`` to the centroid of its ``ell`` nearest points, ``m`` times."""
    pts = as_points(X)
    if pts.shape[0] == 0:
        raise GeometryError("empty point cloud")
    if ell < 1 or ell > pts.shape[0]:
        raise ValueError(f"mean-shift neighbor count {ell} outside [1, {pts.shape[0]}]")
    if m < 0:
        raise ValueError("mean-shift iteration count must be >= 0")
    x = np.array(x, dtype=float)
    for _ in range(m):
        order, _ = nearest_order(pts, x, ell)
        x = pts[order[:ell]].mean(axis=0)
    return x


def _resolve(pts: np.ndarray, d: int, cfg: ScaleConfig, kind: FlatKind):
    N, D = pts.shape
    if d < 0 or d >= D:
        raise GeometryError("dimension out of range")
    start = cfg.resolve_start(d, kind)
    if start > N:
        raise ValueError(f"start size exceeds data ({start} > {N})")
    stop = N if cfg.max_size is None else min(N, cfg.max_size)
    if start > stop:
        raise ValueError(f"start size {start} exceeds the size cap {stop}")
    # keep the scanned sizes on the S + kT grid
    return start, start + cfg.step * ((stop - start) // cfg.step)


def select_neighborhoods(X, centers, d: int, cfg: ScaleConfig | None = None,
                         kind: FlatKind | str = FlatKind.AFFINE) -> list[ScaleProfile]:
    """:func:`select_neighborhood` for every row of ``centers``."""
    cfg = cfg or ScaleConfig()
    kind = FlatKind.parse(kind)
    pts = as_points(X)
    centers = np.array(centers, dtype=float, ndmin=2)
    start, stop = _resolve(pts, d, cfg, kind)
    if cfg.mean_shift:
        ell = min(cfg.mean_shift_neighbors, pts.shape[0])
        centers = np.array([mean_shift_center(pts, c, ell, cfg.mean_shift_iters) for c in centers])
    scans = kernels.scan_neighborhoods(pts, centers, d, kind is FlatKind.AFFINE, start, cfg.step, stop,
                                       cfg.allow_first_scale_min)
    profiles = []
    for center, (betas, sel, order) in zip(centers, scans):
        sizes = start + cfg.step * np.arange(len(betas))
        profiles.append(ScaleProfile(
            center=center,
            sizes=sizes,
            beta2_values=np.asarray(betas),
            selected_index=int(sel),
            neighbor_indices=np.asarray(order[: sizes[sel]], dtype=np.int64),
        ))
    return profiles


def select_neighborhood(X, x, d: int, cfg: ScaleConfig | None = None, kind: FlatKind | str = FlatKind.AFFINE) -> ScaleProfile:
    """Grow nested k-NN neighborhoods of ``x`` and stop at the first beta_2 local minimum.

    Sizes run over ``S, S+T, ...`` up to the data size (or ``cfg.max_size``).
    If no local minimum appears, the size with the smallest beta_2 is
    returned (ties to the larger size).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise GeometryError("select_neighborhood expects a single center point")
    return select_neighborhoods(X, x[None, :], d, cfg, kind)[0]


def scale_map(X, d: int, cfg: ScaleConfig | None = None, kind: FlatKind | str = FlatKind.AFFINE) -> np.ndarray:
    """Selected neighborhood size at every point of ``X``."""
    pts = as_points(X)
    return np.array([p.selected_size for p in select_neighborhoods(pts, pts, d, cfg, kind)], dtype=np.int64)
