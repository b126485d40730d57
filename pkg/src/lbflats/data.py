"""Synthetic hybrid-linear data, clustering error, and matrix/label file formats.

File formats
------------
delimited text
    One point per row, comma separated by default. Blank lines and lines
    starting with ``#`` are skipped; a non-numeric first row is a header.
binary
    ``b"LBF1"``, little-endian ``u64 N``, ``u64 D``, then ``N*D``
    little-endian float64 values in row-major order.
labels
    One integer per line; ``-1`` marks an outlier.
"""
from __future__ import annotations

import csv
import io
import json
import re
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from lbflats._random import derive_rng
from lbflats.geometry import OUTLIER, Flat, FlatKind, PointCloud, separation_angle

MAGIC = b"LBF1"
_HEADER = struct.Struct("<4sQQ")


class MatrixFormatError(ValueError):
    pass


class AngleConstraintError(ValueError):
    pass


# ---------------------------------------------------------------- generator


@dataclass(frozen=True)
class SyntheticSpec:
    """Hybrid linear model sampling protocol.

    Each subspace gets ``samples_per_subspace`` points drawn uniformly from the
    unit ball of the subspace (around its offset) plus isotropic Gaussian noise.
    Outliers are uniform in the cube ``[-M, M]^D`` where ``M`` is the largest
    inlier norm. ``outlier_rule="inliers"`` draws ``round(f * n_inliers)``
    outliers; ``"final"`` makes them a fraction ``f`` of the final data set.
    ``samples_per_dim`` overrides the count with ``samples_per_dim * d_i``.
    """

    dims: tuple
    ambient: int
    samples_per_subspace: int = 250
    samples_per_dim: int | None = None
    noise_sigma: float = 0.05
    outlier_fraction: float = 0.0
    kind: FlatKind = FlatKind.LINEAR
    min_angle: float | None = None
    seed: int = 0
    outlier_rule: str = "inliers"
    max_tries: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "kind", FlatKind.parse(self.kind))
        if not self.dims:
            raise ValueError("need at least one subspace")
        if max(self.dims) >= self.ambient or min(self.dims) < 0:
            raise ValueError("subspace dimensions must lie in [0, D)")
        if self.samples_per_subspace < 1 or (self.samples_per_dim is not None and self.samples_per_dim < 1):
            raise ValueError("samples per subspace must be >= 1")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier fraction must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.outlier_rule not in ("inliers", "final"):
            raise ValueError("outlier_rule must be 'inliers' or 'final'")

    @property
    def K(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return max(self.dims)

    def counts(self) -> list[int]:
        if self.samples_per_dim is not None:
            return [self.samples_per_dim * max(d, 1) for d in self.dims]
        return [self.samples_per_subspace] * self.K

    def outlier_count(self) -> int:
        n_in = sum(self.counts())
        f = self.outlier_fraction
        x = f * n_in if self.outlier_rule == "inliers" else f / (1.0 - f) * n_in
        return int(np.floor(x + 0.5))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = list(self.dims)
        out["kind"] = self.kind.value
        return out


@dataclass
class LabeledCloud:
    cloud: PointCloud
    truth: np.ndarray
    spec: SyntheticSpec | None = None
    flats: list = field(default_factory=list)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def n_outliers(self) -> int:
        return int(np.sum(self.truth == OUTLIER))


def _unit_ball(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    if dim == 0:
        return np.zeros((n, 0))
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((n, 1)) ** (1.0 / dim)


def _random_basis(rng: np.random.Generator, d: int, D: int) -> np.ndarray:
    if d == 0:
        return np.zeros((0, D))
    q, _ = np.linalg.qr(rng.standard_normal((D, d)))
    return q.T


def _bases_ok(bases, min_angle) -> bool:
    for a in range(len(bases)):
        for b in range(a + 1, len(bases)):
            if separation_angle(bases[a], bases[b]) < min_angle:
                return False
    return True


def generate(spec: SyntheticSpec) -> LabeledCloud:
    """Sample a labeled hybrid linear data set (outliers last, label ``-1``)."""
    rng = derive_rng(spec.seed, "generate")
    D = spec.ambient
    for _ in range(spec.max_tries):
        bases = [_random_basis(rng, d, D) for d in spec.dims]
        if spec.min_angle is None or _bases_ok(bases, spec.min_angle):
            break
    else:
        raise AngleConstraintError(
            f"angle constraint infeasible: no draw with separation >= {spec.min_angle} in {spec.max_tries} tries"
        )
    if spec.kind is FlatKind.AFFINE:
        offsets = _unit_ball(rng, spec.K, D)
    else:
        offsets = np.zeros((spec.K, D))

    chunks, labels = [], []
    for k, (basis, n) in enumerate(zip(bases, spec.counts())):
        coeff = _unit_ball(rng, n, basis.shape[0])
        pts = offsets[k] + coeff @ basis + spec.noise_sigma * rng.standard_normal((n, D))
        chunks.append(pts)
        labels.append(np.full(n, k, dtype=np.int64))
    inliers = np.vstack(chunks)
    n_out = spec.outlier_count()
    if n_out:
        half = float(np.max(np.linalg.norm(inliers, axis=1)))
        chunks.append(rng.uniform(-half, half, size=(n_out, D)))
        labels.append(np.full(n_out, OUTLIER, dtype=np.int64))
    pts = np.vstack(chunks)
    truth = np.concatenate(labels)
    flats = [Flat(b, o, spec.kind) for b, o in zip(bases, offsets)]
    return LabeledCloud(PointCloud(pts, truth), truth, spec, flats)


# Named benchmark settings: dims, ambient dimension.
SETTINGS = {
    "2^2inR4": ((2, 2), 4),
    "4^2inR6": ((4, 4), 6),
    "2^4inR4": ((2, 2, 2, 2), 4),
    "10^2inR15": ((10, 10), 15),
    "4-5-6inR10": ((4, 5, 6), 10),
}

_POWER = re.compile(r"^(\d+)\^(\d+)inR(\d+)$")
_MIXED = re.compile(r"^(\d+(?:-\d+)+)inR(\d+)$")


def parse_setting(name: str):
    """``"d^KinRD"`` or ``"d1-d2-...inRD"`` -> ``(dims, D)``."""
    m = _POWER.match(name)
    if m:
        d, K, D = map(int, m.groups())
        return (d,) * K, D
    m = _MIXED.match(name)
    if m:
        return tuple(int(x) for x in m.group(1).split("-")), int(m.group(2))
    raise ValueError(f"unknown setting {name!r}; valid settings: {', '.join(SETTINGS)}")


# ------------------------------------------------------- small studied sets


def parallel_planes(n_per: int = 500, heights=(0.0, 0.2, 0.4), width: float = 0.0, seed: int = 0) -> LabeledCloud:
    """Horizontal unit squares at the given heights, thickened uniformly by ``width``."""
    rng = derive_rng(seed, "parallel-planes")
    chunks, labels = [], []
    for k, h in enumerate(heights):
        xy = rng.random((n_per, 2))
        z = h + (rng.uniform(-width, width, n_per) if width > 0 else np.zeros(n_per))
        chunks.append(np.column_stack([xy, z]))
        labels.append(np.full(n_per, k, dtype=np.int64))
    pts = np.vstack(chunks)
    truth = np.concatenate(labels)
    flats = [Flat(np.eye(3)[:2], [0.0, 0.0, h]) for h in heights]
    return LabeledCloud(PointCloud(pts, truth), truth, None, flats)


_CROSSING_NORMALS = np.array([
    [0.0, 0.0, 1.0],
    [np.sin(np.pi / 3), 0.0, np.cos(np.pi / 3)],
    [0.0, np.sin(np.pi / 3), np.cos(np.pi / 3)],
])


def crossing_planes(n_per: int = 500, sigma: float = 0.0, seed: int = 0) -> LabeledCloud:
    """Three 2-planes through the origin of ``R^3`` with pairwise distinct intersection lines.

    Points are uniform in the unit disk of each plane plus Gaussian noise.
    """
    rng = derive_rng(seed, "crossing-planes")
    chunks, labels, flats = [], [], []
    for k, normal in enumerate(_CROSSING_NORMALS):
        q, _ = np.linalg.qr(np.column_stack([normal, np.eye(3)[:, :2]]))
        basis = q[:, 1:].T
        pts = _unit_ball(rng, n_per, 2) @ basis + sigma * rng.standard_normal((n_per, 3))
        chunks.append(pts)
        labels.append(np.full(n_per, k, dtype=np.int64))
        flats.append(Flat(basis, np.zeros(3)))
    pts = np.vstack(chunks)
    truth = np.concatenate(labels)
    return LabeledCloud(PointCloud(pts, truth), truth, None, flats)


def noisy_affine_planes(seed: int = 0) -> LabeledCloud:
    """Three random affine 2-planes in ``R^3``, 15% noise, 5% outliers."""
    spec = SyntheticSpec((2, 2, 2), 3, samples_per_subspace=500, noise_sigma=0.15,
                         outlier_fraction=0.05, kind=FlatKind.AFFINE, seed=seed)
    return generate(spec)


def init_study_dataset(number: int, seed: int = 0) -> LabeledCloud:
    """Data sets #1 (parallel planes), #2 (noisy affine planes) and #3 (crossing planes)."""
    if number == 1:
        return parallel_planes(500, (0.0, 0.2, 0.4), seed=seed)
    if number == 2:
        return noisy_affine_planes(seed)
    if number == 3:
        return crossing_planes(500, seed=seed)
    raise ValueError("data set number must be 1, 2 or 3")


# ------------------------------------------------------------------ metrics


def misclassification_rate(pred, truth) -> float:
    """Percentage of misclassified inliers under the best one-to-one label matching."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    mask = truth != OUTLIER
    n = int(mask.sum())
    if n == 0:
        raise ValueError("no inliers to score")
    _, p = np.unique(pred[mask], return_inverse=True)
    _, t = np.unique(truth[mask], return_inverse=True)
    confusion = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(confusion, (p, t), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    agree = int(confusion[rows, cols].sum())
    return 100.0 * (n - agree) / n


# ---------------------------------------------------------------------- I/O


def _detect_binary(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def load_matrix(path, fmt: str = "auto", delimiter: str = ",", header: bool | None = None) -> PointCloud:
    """Read a point matrix. ``fmt`` is ``"auto"``, ``"text"`` or ``"binary"``."""
    path = Path(path)
    if fmt == "auto":
        fmt = "binary" if _detect_binary(path) else "text"
    if fmt == "binary":
        return PointCloud(_read_binary(path.read_bytes(), path))
    if fmt != "text":
        raise ValueError(f"unknown matrix format {fmt!r}")
    with open(path, newline="") as fh:
        return PointCloud(parse_text_matrix(fh, delimiter, header, name=str(path)))


def parse_text_matrix(lines, delimiter: str = ",", header: bool | None = None, name: str = "<text>") -> np.ndarray:
    rows, width = [], None
    first = True
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped], delimiter=delimiter)) if delimiter != " " else stripped.split()
        fields = [f.strip() for f in fields]
        if first:
            first = False
            if header:
                continue
            if header is None:
                try:
                    [float(f) for f in fields]
                except ValueError:
                    continue
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise MatrixFormatError(f"{name}: line {lineno}: non-numeric value in {stripped!r}") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise MatrixFormatError(f"{name}: line {lineno}: expected {width} columns, found {len(values)}")
        rows.append(values)
    if not rows:
        raise MatrixFormatError(f"{name}: no data rows")
    return np.array(rows, dtype=float)


def _read_binary(blob: bytes, name) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise MatrixFormatError(f"{name}: truncated header")
    magic, n, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MatrixFormatError(f"{name}: bad magic {magic!r} (expected {MAGIC!r})")
    expected = _HEADER.size + 8 * n * d
    if len(blob) != expected:
        raise MatrixFormatError(f"{name}: payload holds {len(blob) - _HEADER.size} bytes, header implies {8 * n * d}")
    return np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(float)


def save_matrix(path, points, fmt: str = "text", delimiter: str = ",") -> None:
    pts = np.asarray(points.points if isinstance(points, PointCloud) else points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, pts.shape[0], pts.shape[1]))
            fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
    elif fmt == "text":
        with open(path, "w") as fh:
            for row in pts:
                fh.write(delimiter.join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def load_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise MatrixFormatError(f"{path}: line {lineno}: not an integer label: {s!r}") from None
    return np.array(out, dtype=np.int64)


def save_labels(path, labels) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(labels).reshape(-1):
            fh.write(f"{int(v)}\n")


def save_result(path, result, fmt: str = "jsonl") -> None:
    """Per-point labels and distances.

    ``"jsonl"`` writes a summary object followed by one object per point;
    ``"text"`` writes a ``label,distance`` table with a header row.
    """
    if fmt == "jsonl":
        with open(path, "w") as fh:
            summary = {
                "type": "summary",
                "n": int(len(result.labels)),
                "k": len(result.flats),
                "l1_energy": float(result.l1_energy),
                "l2_energy": float(result.l2_energy),
                "empty_clusters": result.empty_clusters,
            }
            fh.write(json.dumps(summary, sort_keys=True) + "\n")
            for i, (lab, dist) in enumerate(zip(result.labels, result.distances)):
                fh.write(json.dumps({"i": i, "label": int(lab), "distance": float(dist)}, sort_keys=True) + "\n")
    elif fmt == "text":
        with open(path, "w") as fh:
            fh.write("label,distance\n")
            for lab, dist in zip(result.labels, result.distances):
                fh.write(f"{int(lab)},{float(dist)!r}\n")
    else:
        raise ValueError(f"unknown result format {fmt!r}")


def load_trajectories(path, delimiter: str | None = None) -> PointCloud:
    """Motion-segmentation trajectories.

    The file holds a ``2F x N`` matrix: rows ``2i`` and ``2i+1`` are the image
    x and y coordinates in frame ``i``, one column per tracked feature. Each
    feature becomes a point in ``R^{2F}``.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    if delimiter is None:
        delimiter = "," if "," in text else " "
    mat = parse_text_matrix(io.StringIO(text), delimiter, header=False, name=str(path))
    if mat.shape[0] % 2:
        raise MatrixFormatError(f"{path}: trajectory matrix needs an even number of rows (2F), got {mat.shape[0]}")
    return PointCloud(mat.T.copy())
