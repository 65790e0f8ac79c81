"""Point-cloud containers, distance metrics, and principal-axis frames.

Conventions used throughout the package:

* Clouds are (n, 3) float64 arrays tagged with the frame they live in
  (scene or generated) and an optional semantic label (object or rod).
* ``chamfer`` uses squared distances and sums the two directional means,
  so two single-point clouds one unit apart score exactly 2.0.
* ``hausdorff_unidirectional`` is the worst nearest-neighbor Euclidean
  distance from the first cloud into the second, unsquared.
* Principal frames sort eigenvalues in descending order and fix each
  eigenvector's sign so its largest-magnitude component is nonnegative
  (ties broken by the lowest index). Covariance is reduced over a
  canonical point ordering, which makes the frame invariant to input
  permutation at the bit level.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloudError

# Eigenvalues below this are treated as degenerate and clamped before any
# ratio is formed from them.
EIGENVALUE_CLAMP = 1e-12

# Nearest-neighbor queries use exhaustive search up to this many reference
# points and a k-d tree above it. Both paths return squared distances
# recomputed with the same arithmetic, so they agree bit-for-bit.
KDTREE_MIN_POINTS = 256


class Frame(enum.Enum):
    SCENE = "scene"
    GENERATED = "generated"


class Label(enum.Enum):
    OBJECT = "object"
    ROD = "rod"
    UNTAGGED = "untagged"


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
    if pts.size and not np.isfinite(pts).all():
        raise ValueError("cloud coordinates must be finite")
    pts = pts.copy()
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An immutable set of 3D points with a frame tag and semantic label."""

    points: np.ndarray
    frame: Frame
    label: Label = Label.UNTAGGED

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def require_nonempty(self, op: str) -> None:
        if self.is_empty:
            raise EmptyCloudError(f"{op} needs a nonempty cloud")

    def with_frame(self, frame: Frame) -> "PointCloud":
        return PointCloud(self.points, frame, self.label)


@dataclass(frozen=True, eq=False)
class PrincipalFrame:
    """Eigen-decomposition of a cloud's covariance, in canonical form.

    ``eigenvectors`` holds unit eigenvectors as columns, ordered so that
    ``eigenvalues`` is descending. ``degenerate_axes`` counts eigenvalues
    below ``EIGENVALUE_CLAMP``; a nonzero count flags a rank-deficient
    cloud but is not an error.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    centroid: np.ndarray
    degenerate_axes: int = 0

    def __post_init__(self):
        vecs = np.asarray(self.eigenvectors, dtype=np.float64)
        vals = np.asarray(self.eigenvalues, dtype=np.float64)
        cen = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        if vecs.shape != (3, 3):
            raise ValueError("eigenvectors must be a 3x3 matrix")
        if vals.shape != (3,):
            raise ValueError("eigenvalues must be a length-3 vector")
        if not np.allclose(vecs.T @ vecs, np.eye(3), atol=1e-9):
            raise ValueError("eigenvector matrix is not orthonormal")
        if np.any(vals < 0) or np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be nonnegative and descending")
        for arr in (vecs, vals, cen):
            arr.setflags(write=False)
        object.__setattr__(self, "eigenvectors", vecs)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "centroid", cen)

    @property
    def degenerate(self) -> bool:
        return self.degenerate_axes > 0


def centroid(cloud: PointCloud) -> np.ndarray:
    """Arithmetic mean of the cloud's points."""
    cloud.require_nonempty("centroid")
    return cloud.points.mean(axis=0)


def canonical_sign(vector: np.ndarray) -> np.ndarray:
    """Flip ``vector`` so its largest-magnitude component is nonnegative.

    Ties on the magnitude go to the lowest index, which is what argmax
    returns on exact equality.
    """
    pivot = int(np.argmax(np.abs(vector)))
    if vector[pivot] < 0:
        return -vector
    return vector


def principal_frame(cloud: PointCloud) -> PrincipalFrame:
    """Centroid plus eigenpairs of the sample covariance of the cloud.

    Points are reduced in a canonical sorted order, so any permutation of
    the same points produces a bit-identical frame. A cloud whose
    covariance has rank below 3 (all points identical, collinear, or
    coplanar) is returned with the corresponding ``degenerate_axes``
    count rather than raising.
    """
    cloud.require_nonempty("principal_frame")
    pts = cloud.points
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]
    n = pts.shape[0]
    mean = pts.mean(axis=0)
    centered = pts - mean
    if n > 1:
        cov = np.einsum("ni,nj->ij", centered, centered) / (n - 1)
    else:
        cov = np.zeros((3, 3))
    vals, vecs = np.linalg.eigh(cov)
    desc = np.argsort(vals)[::-1]
    vals = np.maximum(vals[desc], 0.0)
    vecs = vecs[:, desc]
    for i in range(3):
        vecs[:, i] = canonical_sign(vecs[:, i])
    return PrincipalFrame(
        eigenvectors=vecs,
        eigenvalues=vals,
        centroid=mean,
        degenerate_axes=int(np.sum(vals < EIGENVALUE_CLAMP)),
    )


def _nearest_sq_dists(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each query point to its nearest
    reference point.

    The k-d path only looks up the neighbor index and recomputes the
    squared distance from coordinates, so both paths perform the exact
    same arithmetic as an exhaustive scan.
    """
    if ref.shape[0] > KDTREE_MIN_POINTS:
        tree = cKDTree(ref)
        _, idx = tree.query(query, k=1)
        diff = query - ref[idx]
        return (diff * diff).sum(axis=1)
    diff = query[:, None, :] - ref[None, :, :]
    return (diff * diff).sum(axis=2).min(axis=1)


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Chamfer distance: sum of the two directional means of
    squared nearest-neighbor distances."""
    a.require_nonempty("chamfer")
    b.require_nonempty("chamfer")
    return float(
        np.mean(_nearest_sq_dists(a.points, b.points))
        + np.mean(_nearest_sq_dists(b.points, a.points))
    )


def hausdorff_unidirectional(a: PointCloud, b: PointCloud) -> float:
    """Worst-case nearest-neighbor Euclidean distance from ``a`` into
    ``b``. Not symmetric."""
    a.require_nonempty("hausdorff_unidirectional")
    b.require_nonempty("hausdorff_unidirectional")
    return float(np.sqrt(_nearest_sq_dists(a.points, b.points).max()))


@dataclass(frozen=True, eq=False)
class RigidishTransform:
    """A 4x4 homogeneous map whose last row is exactly (0, 0, 0, 1).

    The linear block is required to be invertible but not orthogonal: the
    alignment search produces maps that carry per-axis scale corrections.
    ``target_frame`` names the frame points land in after application;
    ``None`` keeps the input cloud's tag.
    """

    matrix: np.ndarray
    target_frame: Frame | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).copy()
        if m.shape != (4, 4):
            raise ValueError("transform matrix must be 4x4")
        if not np.isfinite(m).all():
            raise ValueError("transform entries must be finite")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("last row must be exactly (0, 0, 0, 1)")
        if np.linalg.det(m[:3, :3]) == 0.0:
            raise ValueError("linear block must be invertible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, target_frame: Frame | None = None) -> "RigidishTransform":
        return cls(np.eye(4), target_frame)

    @classmethod
    def from_translation(
        cls, offset, target_frame: Frame | None = None
    ) -> "RigidishTransform":
        m = np.eye(4)
        m[:3, 3] = np.asarray(offset, dtype=np.float64).reshape(3)
        return cls(m, target_frame)

    @classmethod
    def from_linear(
        cls, block, target_frame: Frame | None = None
    ) -> "RigidishTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(block, dtype=np.float64).reshape(3, 3)
        return cls(m, target_frame)

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def __matmul__(self, other: "RigidishTransform") -> "RigidishTransform":
        target = self.target_frame if self.target_frame is not None else other.target_frame
        return RigidishTransform(self.matrix @ other.matrix, target)

    def inverse(self, target_frame: Frame | None = None) -> "RigidishTransform":
        inv = np.linalg.inv(self.matrix)
        inv[3] = [0.0, 0.0, 0.0, 1.0]
        return RigidishTransform(inv, target_frame)


def apply_transform(transform: RigidishTransform, cloud: PointCloud) -> PointCloud:
    """Map every point homogeneously and retag the cloud's frame."""
    pts = cloud.points @ transform.linear.T + transform.translation
    frame = transform.target_frame if transform.target_frame is not None else cloud.frame
    return PointCloud(pts, frame, cloud.label)


def save_xyz(cloud: PointCloud, path) -> None:
    """Write one ``x y z`` line per point, full float round-trip precision."""
    with open(path, "w") as fh:
        for x, y, z in cloud.points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def load_xyz(path, frame: Frame = Frame.SCENE, label: Label = Label.UNTAGGED) -> PointCloud:
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            pts.append([float(v) for v in parts])
    return PointCloud(np.array(pts, dtype=np.float64).reshape(-1, 3), frame, label)


def save_xyz_binary(cloud: PointCloud, path) -> None:
    """Binary cloud format: uint64 little-endian count, then float32
    little-endian xyz triples."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(cloud)))
        fh.write(cloud.points.astype("<f4").tobytes())


def load_xyz_binary(
    path, frame: Frame = Frame.SCENE, label: Label = Label.UNTAGGED
) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated header")
    (count,) = struct.unpack("<Q", raw[:8])
    body = raw[8:]
    expected = count * 3 * 4
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, got {len(body)}")
    pts = np.frombuffer(body, dtype="<f4").reshape(count, 3).astype(np.float64)
    return PointCloud(pts, frame, label)
