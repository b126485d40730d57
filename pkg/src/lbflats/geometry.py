"""Flats (affine or linear subspaces) and point clouds.

A d-flat is stored as an orthonormal basis ``(d, D)`` plus an offset in
``R^D``. Linear flats always carry a zero offset.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class FlatKind(str, enum.Enum):
    AFFINE = "affine"
    LINEAR = "linear"

    @classmethod
    def parse(cls, value: "FlatKind | str") -> "FlatKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown flat kind {value!r} (expected 'affine' or 'linear')") from None


class GeometryError(ValueError):
    pass


OUTLIER = -1


@dataclass(frozen=True)
class Flat:
    """A ``dim``-dimensional flat in ``R^ambient_dim``.

    ``basis`` has shape ``(dim, ambient_dim)`` with orthonormal rows.
    """

    basis: np.ndarray
    offset: np.ndarray
    kind: FlatKind = FlatKind.AFFINE

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float, ndmin=2)
        offset = np.array(self.offset, dtype=float).reshape(-1)
        if basis.size == 0:
            basis = np.zeros((0, offset.shape[0]))
        if basis.shape[1] != offset.shape[0]:
            raise GeometryError("basis and offset disagree on the ambient dimension")
        if basis.shape[0] >= basis.shape[1]:
            raise GeometryError("dimension out of range")
        kind = FlatKind.parse(self.kind)
        if kind is FlatKind.LINEAR:
            offset = np.zeros_like(offset)
        basis.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "kind", kind)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    def gram_error(self) -> float:
        """Max-norm deviation of the basis Gram matrix from the identity."""
        if self.dim == 0:
            return 0.0
        return float(np.abs(self.basis @ self.basis.T - np.eye(self.dim)).max())

    def transformed(self, rotation: np.ndarray, translation=None) -> "Flat":
        """Image of the flat under ``x -> rotation @ x + translation``."""
        rotation = np.asarray(rotation, dtype=float)
        offset = rotation @ self.offset
        if translation is not None:
            offset = offset + np.asarray(translation, dtype=float)
        return Flat(self.basis @ rotation.T, offset, self.kind)


@dataclass(frozen=True)
class PointCloud:
    """``N`` points in ``R^D`` with optional ground-truth labels (``-1`` marks outliers)."""

    points: np.ndarray
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise GeometryError("a point cloud needs N >= 1 points of dimension D >= 1")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point coordinates must be finite")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != pts.shape[0]:
                raise GeometryError("labels must have one entry per point")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n


def as_points(X) -> np.ndarray:
    if isinstance(X, PointCloud):
        return X.points
    pts = np.asarray(X, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return pts


def _complete_basis(partial: np.ndarray, d: int, D: int) -> np.ndarray:
    """Pad ``partial`` (k, D) orthonormal rows to ``d`` rows deterministically."""
    k = partial.shape[0]
    if k >= d:
        return partial[:d]
    # Gram-Schmidt (twice, for stability) against the standard basis.
    rows = list(partial)
    for e in np.eye(D):
        v = e.copy()
        for _ in range(2):
            for r in rows:
                v -= (v @ r) * r
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            rows.append(v / norm)
        if len(rows) == d:
            break
    return np.array(rows).reshape(d, D)


def best_fit_flat(points, d: int, kind: FlatKind | str = FlatKind.AFFINE) -> Flat:
    """Least-squares d-flat through ``points``.

    Affine flats pass through the centroid and span the top ``d`` principal
    directions; linear flats span the top ``d`` right singular vectors of the
    uncentered data. Fewer than ``d + 1`` points still yield a flat (the basis
    is completed arbitrarily).
    """
    kind = FlatKind.parse(kind)
    pts = as_points(points)
    if pts.shape[0] < 1:
        raise GeometryError("empty neighborhood")
    D = pts.shape[1]
    if d < 0 or d >= D:
        raise GeometryError("dimension out of range")
    if kind is FlatKind.AFFINE:
        offset = pts.mean(axis=0)
        centered = pts - offset
    else:
        offset = np.zeros(D)
        centered = pts
    if d == 0:
        return Flat(np.zeros((0, D)), offset, kind)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-13)) if s.size and s[0] > 0 else 0
    basis = vt[: min(d, rank)]
    if basis.shape[0] < d:
        basis = _complete_basis(basis, d, D)
    return Flat(basis, offset, kind)


def best_fit_flats(neighborhoods, d: int, kind: FlatKind | str = FlatKind.AFFINE) -> list[Flat]:
    """:func:`best_fit_flat` for many point sets, batching equal-sized ones through one SVD call."""
    kind = FlatKind.parse(kind)
    sets = [as_points(nb) for nb in neighborhoods]
    out: list = [None] * len(sets)
    groups: dict = {}
    for j, pts in enumerate(sets):
        groups.setdefault(pts.shape, []).append(j)
    for (n, D), members in groups.items():
        if n < 1 or d <= 0 or d >= D or len(members) == 1:
            for j in members:
                out[j] = best_fit_flat(sets[j], d, kind)
            continue
        stack = np.stack([sets[j] for j in members])
        if kind is FlatKind.AFFINE:
            offsets = stack.mean(axis=1)
            stack = stack - offsets[:, None, :]
        else:
            offsets = np.zeros((len(members), D))
        _, s, vt = np.linalg.svd(stack, full_matrices=False)
        for row, j in enumerate(members):
            sv = s[row]
            if sv.shape[0] >= d and sv[0] > 0 and sv[d - 1] > sv[0] * 1e-13:
                out[j] = Flat(vt[row, :d], offsets[row], kind)
            else:  # rank deficient: let the single-set path complete the basis
                out[j] = best_fit_flat(sets[j], d, kind)
    return out


def residual_sum(points, flat: Flat) -> float:
    """Sum of squared distances from ``points`` to ``flat``."""
    return float(np.sum(distances_to_flat(points, flat) ** 2))


def _check_dims(pts: np.ndarray, flat: Flat):
    if pts.shape[-1] != flat.ambient_dim:
        raise GeometryError(
            f"dimension mismatch: point has dimension {pts.shape[-1]}, flat lives in R^{flat.ambient_dim}"
        )


def project_to_flat(x, flat: Flat) -> np.ndarray:
    """Orthogonal projection of one point (or rows of points) onto ``flat``."""
    x = np.asarray(x, dtype=float)
    _check_dims(x, flat)
    y = x - flat.offset
    return flat.offset + (y @ flat.basis.T) @ flat.basis


def _residual_vectors(pts: np.ndarray, flat: Flat) -> np.ndarray:
    y = pts - flat.offset
    return y - (y @ flat.basis.T) @ flat.basis


def dist_to_flat(x, flat: Flat) -> float:
    """Euclidean distance from ``x`` to its projection onto ``flat``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise GeometryError("dist_to_flat expects a single point; use distances_to_flat for rows")
    _check_dims(x, flat)
    return float(np.linalg.norm(_residual_vectors(x, flat)))


def distances_to_flat(points, flat: Flat) -> np.ndarray:
    pts = as_points(points)
    _check_dims(pts, flat)
    r = _residual_vectors(pts, flat)
    return np.sqrt(np.einsum("...i,...i->...", r, r))


_STACK_BUDGET = 1 << 21  # doubles per stacked temporary


def distance_matrix(points, flats) -> np.ndarray:
    """``(N, len(flats))`` matrix of point-to-flat distances."""
    pts = as_points(points)
    flats = list(flats)
    if not flats:
        raise GeometryError("empty flat list")
    for flat in flats:
        _check_dims(pts, flat)
    N = pts.shape[0]
    out = np.empty((N, len(flats)))
    # Residual of x against flat g is (x - o_g) P_g with P_g the projector onto
    # the orthogonal complement, so a whole chunk of flats is one matrix product
    # against [x, 1].
    D = pts.shape[1]
    aug = np.empty((N, D + 1))
    aug[:, :D] = pts
    aug[:, D] = 1.0
    step = max(1, _STACK_BUDGET // max(1, N * D))
    by_dim: dict = {}
    for j, flat in enumerate(flats):
        by_dim.setdefault(flat.dim, []).append(j)
    for members in by_dim.values():
        for lo in range(0, len(members), step):
            cols = members[lo : lo + step]
            g = len(cols)
            bases = np.stack([flats[j].basis for j in cols])  # (g, d, D)
            offsets = np.stack([flats[j].offset for j in cols])
            proj = np.eye(D) - np.einsum("gki,gkj->gij", bases, bases)
            rhs = np.empty((D + 1, g, D))
            rhs[:D] = proj.transpose(1, 0, 2)
            rhs[D] = -np.einsum("gi,gij->gj", offsets, proj)
            r = (aug @ rhs.reshape(D + 1, g * D)).reshape(N, g, D)
            out[:, cols] = np.sqrt(np.einsum("ngi,ngi->ng", r, r))
    return out


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles (ascending, radians) between row spans of orthonormal ``A`` and ``B``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros(0)
    s = np.linalg.svd(A @ B.T, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def separation_angle(A: np.ndarray, B: np.ndarray) -> float:
    """Smallest principal angle not forced to zero by dimension counting.

    Two subspaces of dimensions ``p`` and ``q`` in ``R^D`` always share at
    least ``p + q - D`` dimensions; those zero angles are skipped.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    angles = principal_angles(A, B)
    forced = max(0, A.shape[0] + B.shape[0] - A.shape[1])
    if forced >= angles.size:
        return 0.0
    return float(angles[forced])
