"""Grasp-rectangle extraction from a rod mask and an object mask.

A rod painted through an object disappears where it passes behind it, so
the break in the rod marks where the jaws should close. The steps:

1. Fit the rod's image-space axis by 2D total least squares (principal
   axis of the set-pixel distribution). Masks without a dominant
   direction are rejected.
2. Project set pixels onto the axis, bin the coordinates at one-pixel
   resolution, and report maximal empty intervals between occupied bins
   as discontinuities. Sub-2-pixel gaps are treated as sampling noise and
   bridged.
3. Score each gap by the overlap (IoU) between its rod-thickness band and
   the object mask, filter by a minimum run length relative to the object
   scale and by a minimum overlap, then keep the best-overlapping gap.

The resulting rectangle is centered on the winning gap, oriented along
the rod, as wide as the gap, and as tall as the measured rod thickness.

Angles live in (-pi/2, pi/2], measured in pixel coordinates (u right,
v down), and are taken modulo pi: a rod has no preferred direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyMaskError,
    IsotropicMaskError,
    NoViableGraspError,
)
from .lifting import BinaryMask

# Below this ratio of principal to secondary spread the mask has no
# usable direction.
MIN_ANISOTROPY = 1.5

# Empty runs shorter than this many pixels are bridged, not reported.
MIN_GAP_PX = 2.0

DEFAULT_DELTA = 0.1
DEFAULT_EPSILON = 0.2


def normalize_angle(theta: float) -> float:
    """Map any angle to the rod-equivalent representative in (-pi/2, pi/2]."""
    theta = math.fmod(theta, math.pi)
    if theta > math.pi / 2:
        theta -= math.pi
    elif theta <= -math.pi / 2:
        theta += math.pi
    return theta


def angle_difference(a: float, b: float) -> float:
    """Smallest angular distance between two undirected angles."""
    d = abs(normalize_angle(a) - normalize_angle(b))
    return min(d, math.pi - d)


@dataclass(frozen=True, eq=False)
class RodAxis:
    """Image-space line through the rod pixels.

    ``direction`` is a unit vector (du, dv), canonicalized so du > 0
    (or du == 0 and dv > 0); ``angle`` is derived from it and always
    lands in (-pi/2, pi/2]. ``anchor`` is the pixel centroid the axis
    parameterization is measured from; ``thickness`` is the rod's
    measured perpendicular extent in pixels.
    """

    direction: np.ndarray
    anchor: np.ndarray
    thickness: float
    angle: float = field(init=False)

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64).reshape(2)
        anchor = np.asarray(self.anchor, dtype=np.float64).reshape(2)
        if not (np.isfinite(direction).all() and np.isfinite(anchor).all()):
            raise ValueError("direction and anchor must be finite")
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise ValueError("direction must be a nonzero vector")
        direction = direction / norm
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            direction = -direction
        direction.setflags(write=False)
        anchor.setflags(write=False)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(
            self, "angle", normalize_angle(math.atan2(direction[1], direction[0]))
        )
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    def point_at(self, t: float) -> np.ndarray:
        return self.anchor + t * self.direction


@dataclass(frozen=True)
class Discontinuity:
    """A maximal empty interval along the rod axis, in axis coordinates."""

    start_t: float
    end_t: float
    run_length: float
    iou_with_object: float

    def __post_init__(self):
        if self.end_t <= self.start_t:
            raise ValueError("end_t must exceed start_t")
        if not 0.0 <= self.iou_with_object <= 1.0:
            raise ValueError("iou_with_object must lie in [0, 1]")


@dataclass(frozen=True)
class GraspRectangle:
    """An oriented grasp rectangle in pixel coordinates.

    ``width`` spans the jaw opening along the rod axis, ``height`` the
    jaw thickness perpendicular to it. The angle is normalized to
    (-pi/2, pi/2] on construction.
    """

    center: tuple[float, float]
    angle: float
    width: float
    height: float

    def __post_init__(self):
        cu, cv = self.center
        if not (np.isfinite(cu) and np.isfinite(cv)):
            raise ValueError("center must be finite")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("width and height must be positive")
        object.__setattr__(self, "center", (float(cu), float(cv)))
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))

    def corners(self) -> np.ndarray:
        """Corner points tracing the perimeter, starting on a jaw edge.

        The first edge (corners 0 to 1) runs along the rod axis and has
        length ``width``; the jaw contact edges are 1-2 and 3-0.
        """
        along = np.array([math.cos(self.angle), math.sin(self.angle)])
        across = np.array([-math.sin(self.angle), math.cos(self.angle)])
        c = np.asarray(self.center)
        half_w = 0.5 * self.width * along
        half_h = 0.5 * self.height * across
        return np.array(
            [
                c - half_w - half_h,
                c + half_w - half_h,
                c + half_w + half_h,
                c - half_w + half_h,
            ]
        )

    @classmethod
    def from_corners(cls, corners) -> "GraspRectangle":
        """Rebuild from 4 corner points ordered around the perimeter with
        the first edge along the jaw-opening direction."""
        pts = np.asarray(corners, dtype=np.float64).reshape(4, 2)
        if not np.isfinite(pts).all():
            raise ValueError("corners must be finite")
        edge_w = pts[1] - pts[0]
        edge_h = pts[2] - pts[1]
        width = float(np.linalg.norm(edge_w))
        height = float(np.linalg.norm(edge_h))
        if width == 0.0 or height == 0.0:
            raise ValueError("degenerate rectangle")
        center = pts.mean(axis=0)
        angle = math.atan2(edge_w[1], edge_w[0])
        return cls((float(center[0]), float(center[1])), angle, width, height)

    def to_json_dict(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "angle_rad": self.angle,
            "width_px": self.width,
            "height_px": self.height,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "GraspRectangle":
        return cls(
            (float(data["center"][0]), float(data["center"][1])),
            float(data["angle_rad"]),
            float(data["width_px"]),
            float(data["height_px"]),
        )


def fit_rod_axis(mask: BinaryMask) -> RodAxis:
    """Total-least-squares line through the mask's set pixels.

    Needs at least 2 set pixels and a spread ratio of at least
    ``MIN_ANISOTROPY`` between the principal and secondary directions.
    """
    v, u = np.nonzero(mask.bits)
    if len(u) < 2:
        raise EmptyMaskError(f"rod axis needs at least 2 set pixels, got {len(u)}")
    pts = np.column_stack([u, v]).astype(np.float64)
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / (len(pts) - 1)
    vals, vecs = np.linalg.eigh(cov)
    lead, second = float(vals[1]), float(vals[0])
    if lead / max(second, 1e-12) < MIN_ANISOTROPY:
        raise IsotropicMaskError(
            f"spread ratio {lead / max(second, 1e-12):.3f} below {MIN_ANISOTROPY}"
        )
    direction = vecs[:, 1]
    angle = normalize_angle(math.atan2(direction[1], direction[0]))
    across = centered @ np.array([-math.sin(angle), math.cos(angle)])
    across = across - np.median(across)
    # 2x the 90th-percentile absolute deviation recovers the exact pixel
    # width of a clean uniform band while staying robust to salt noise.
    thickness = 2.0 * float(np.quantile(np.abs(across), 0.9)) + 1.0
    return RodAxis(direction=direction, anchor=mean, thickness=thickness)


def find_discontinuities(
    rod_mask: BinaryMask, axis: RodAxis, object_mask: BinaryMask
) -> tuple[Discontinuity, ...]:
    """Maximal empty intervals along the rod axis, scored against the
    object mask.

    Pixel coordinates are projected onto the axis and binned at 1-pixel
    resolution; a gap is a run of empty bins strictly inside the occupied
    range. Runs shorter than ``MIN_GAP_PX`` are bridged. Each gap's score
    is the IoU between its band region (the rod-thickness strip over the
    gap interval) and the object mask.
    """
    if rod_mask.bits.shape != object_mask.bits.shape:
        raise DimensionMismatchError(
            f"rod {rod_mask.bits.shape} vs object {object_mask.bits.shape}"
        )
    v, u = np.nonzero(rod_mask.bits)
    if len(u) == 0:
        return ()
    # Bin in the absolute axis coordinate u*du + v*dv rather than relative
    # to the anchor: pixel-aligned rods then produce exact integer bins
    # regardless of where the centroid fell.
    proj = u * axis.direction[0] + v * axis.direction[1]
    origin = float(axis.anchor[0] * axis.direction[0] + axis.anchor[1] * axis.direction[1])
    occupied = np.unique(np.rint(proj).astype(int))

    gaps: list[tuple[float, float]] = []
    for left, right in zip(occupied[:-1], occupied[1:]):
        empty_bins = right - left - 1
        if empty_bins >= MIN_GAP_PX:
            gaps.append((left + 0.5 - origin, right - 0.5 - origin))
    if not gaps:
        return ()

    height, width = rod_mask.bits.shape
    grid_v, grid_u = np.mgrid[0:height, 0:width]
    du = grid_u - axis.anchor[0]
    dv = grid_v - axis.anchor[1]
    grid_t = du * axis.direction[0] + dv * axis.direction[1]
    grid_s = -du * axis.direction[1] + dv * axis.direction[0]
    in_band = np.abs(grid_s) <= axis.thickness / 2.0

    found = []
    for start_t, end_t in gaps:
        band = in_band & (grid_t >= start_t) & (grid_t <= end_t)
        union = np.count_nonzero(band | object_mask.bits)
        inter = np.count_nonzero(band & object_mask.bits)
        found.append(
            Discontinuity(
                start_t=float(start_t),
                end_t=float(end_t),
                run_length=float(end_t - start_t),
                iou_with_object=float(inter / union) if union else 0.0,
            )
        )
    return tuple(found)


def select_grasp(
    discontinuities: tuple[Discontinuity, ...],
    axis: RodAxis,
    object_mask: BinaryMask,
    delta: float = DEFAULT_DELTA,
    epsilon: float = DEFAULT_EPSILON,
    jaw_height: float | None = None,
) -> GraspRectangle:
    """Pick the best viable gap and turn it into a grasp rectangle.

    A gap survives if its run length is at least ``delta`` times the
    square root of the object area and its object overlap is at least
    ``epsilon``. Among survivors the highest overlap wins; ties go to the
    longer run, then to the smaller start coordinate. ``jaw_height``
    overrides the measured rod thickness as the rectangle height.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if jaw_height is not None and jaw_height <= 0:
        raise ValueError("jaw_height must be positive")

    min_run = delta * math.sqrt(object_mask.count)
    viable = [
        d
        for d in discontinuities
        if d.run_length >= min_run and d.iou_with_object >= epsilon
    ]
    if not viable:
        raise NoViableGraspError(
            f"no gap passed delta={delta} epsilon={epsilon} "
            f"({len(discontinuities)} candidate gaps)"
        )
    best = min(viable, key=lambda d: (-d.iou_with_object, -d.run_length, d.start_t))
    mid = 0.5 * (best.start_t + best.end_t)
    center = axis.point_at(mid)
    return GraspRectangle(
        center=(float(center[0]), float(center[1])),
        angle=axis.angle,
        width=best.run_length,
        height=jaw_height if jaw_height is not None else axis.thickness,
    )
