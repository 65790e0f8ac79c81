"""Image-space observations and their conversion to and from 3D points.

Depth maps hold metric values in meters; zero, negative-infinite, or NaN
entries are invalid and never lifted. Measured depth is stored on disk as
16-bit grayscale PNG in millimeters, predicted depth as a raw float32
raster with a width/height header. Masks are 8-bit PNGs where any nonzero
value means set.

Backprojection follows the usual pinhole model: a pixel (u, v) with depth
d maps to ((u - cx) * d / fx, (v - cy) * d / fy, d). Projection rounds to
the nearest pixel, drops points behind the camera or out of bounds, and
optionally dilates the result to bridge sampling sparsity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .clouds import Frame, Label, PointCloud
from .errors import DimensionMismatchError, EmptyLiftError, EmptyProjectionError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @classmethod
    def default_for(cls, width: int, height: int) -> "CameraIntrinsics":
        """Placeholder intrinsics for imagery without calibration.

        The same intrinsics must be used for lifting and for projecting
        back; the alignment step absorbs any global scale, so the exact
        focal value does not bias the pipeline.
        """
        f = float(max(width, height))
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A boolean raster; ``bits[v, u]`` is True where the mask is set."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError("mask must be 2D")
        bits = bits.astype(bool).copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def complement(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def intersection(self, other: "BinaryMask") -> "BinaryMask":
        self._check_same_shape(other)
        return BinaryMask(self.bits & other.bits)

    def union(self, other: "BinaryMask") -> "BinaryMask":
        self._check_same_shape(other)
        return BinaryMask(self.bits | other.bits)

    def iou(self, other: "BinaryMask") -> float:
        self._check_same_shape(other)
        union = np.count_nonzero(self.bits | other.bits)
        if union == 0:
            return 0.0
        return float(np.count_nonzero(self.bits & other.bits) / union)

    def dilated(self, pixels: int) -> "BinaryMask":
        if pixels <= 0:
            return self
        grown = ndimage.binary_dilation(
            self.bits, structure=np.ones((3, 3), dtype=bool), iterations=pixels
        )
        return BinaryMask(grown)

    def _check_same_shape(self, other: "BinaryMask") -> None:
        if self.bits.shape != other.bits.shape:
            raise DimensionMismatchError(
                f"mask shapes differ: {self.bits.shape} vs {other.bits.shape}"
            )


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth in meters. Zero, NaN, and infinite entries are
    invalid; negative finite values are rejected outright."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).copy()
        if vals.ndim != 2:
            raise ValueError("depth map must be 2D")
        finite = np.isfinite(vals)
        if np.any(vals[finite] < 0):
            raise ValueError("depth values must be nonnegative where finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def validity(self) -> np.ndarray:
        """Boolean raster of pixels that carry usable depth."""
        return np.isfinite(self.values) & (self.values > 0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "DepthMap":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return DepthMap(self.values * factor)


def masked_valid_counts(depth: DepthMap, mask: BinaryMask) -> tuple[int, int]:
    """(valid, total) pixel counts inside the mask, for lift-quality logs."""
    if depth.values.shape != mask.bits.shape:
        raise DimensionMismatchError(
            f"depth {depth.values.shape} vs mask {mask.bits.shape}"
        )
    total = mask.count
    valid = int(np.count_nonzero(mask.bits & depth.validity))
    return valid, total


def backproject(
    depth: DepthMap,
    mask: BinaryMask,
    intrinsics: CameraIntrinsics,
    frame: Frame,
    label: Label = Label.UNTAGGED,
) -> PointCloud:
    """Lift every masked pixel with valid depth to a 3D point.

    Invalid-depth pixels inside the mask are skipped silently; callers
    that care about the skip rate can use ``masked_valid_counts``.
    """
    if depth.values.shape != mask.bits.shape:
        raise DimensionMismatchError(
            f"depth {depth.values.shape} vs mask {mask.bits.shape}"
        )
    selected = mask.bits & depth.validity
    if not selected.any():
        raise EmptyLiftError("no masked pixel carries valid depth")
    v, u = np.nonzero(selected)
    d = depth.values[v, u]
    x = (u - intrinsics.cx) * d / intrinsics.fx
    y = (v - intrinsics.cy) * d / intrinsics.fy
    return PointCloud(np.column_stack([x, y, d]), frame, label)


def project_to_mask(
    cloud: PointCloud,
    intrinsics: CameraIntrinsics,
    width: int,
    height: int,
    dilation: int = 0,
) -> BinaryMask:
    """Project a cloud back onto the pixel grid as a binary mask.

    Points with nonpositive depth are skipped, points falling outside the
    image are dropped, and the surviving pixels are optionally dilated.
    """
    cloud.require_nonempty("project_to_mask")
    pts = cloud.points
    ahead = pts[:, 2] > 0
    pts = pts[ahead]
    bits = np.zeros((height, width), dtype=bool)
    if pts.shape[0]:
        u = np.rint(intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx).astype(int)
        v = np.rint(intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy).astype(int)
        keep = (u >= 0) & (u < width) & (v >= 0) & (v < height)
        bits[v[keep], u[keep]] = True
    if not bits.any():
        raise EmptyProjectionError("no point landed inside the image bounds")
    return BinaryMask(bits).dilated(dilation)


# ---------------------------------------------------------------------------
# Raster I/O

DEPTH_PNG_SCALE = 1000.0  # millimeters per meter


def save_depth_png(depth: DepthMap, path) -> None:
    """Measured-depth format: 16-bit grayscale PNG in millimeters.

    Invalid pixels are stored as 0, which round-trips back to invalid.
    """
    mm = np.where(depth.validity, np.rint(depth.values * DEPTH_PNG_SCALE), 0)
    mm = np.clip(mm, 0, np.iinfo(np.uint16).max).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")


def load_depth_png(path) -> DepthMap:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel depth PNG")
    return DepthMap(arr.astype(np.float64) / DEPTH_PNG_SCALE)


def save_depth_f32(depth: DepthMap, path) -> None:
    """Predicted-depth format: '<II' width/height header then row-major
    little-endian float32 meters. Invalid pixels are stored as NaN."""
    vals = np.where(depth.validity, depth.values, np.nan).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", depth.width, depth.height))
        fh.write(vals.tobytes())


def load_depth_f32(path) -> DepthMap:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated header")
    width, height = struct.unpack("<II", raw[:8])
    body = raw[8:]
    expected = width * height * 4
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, got {len(body)}")
    vals = np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float64)
    return DepthMap(vals)


def save_mask_png(mask: BinaryMask, path) -> None:
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8)).save(path, format="PNG")


def load_mask_png(path) -> BinaryMask:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr > 0)


def load_rgb_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB")).copy()


def save_rgb_png(image: np.ndarray, path) -> None:
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) uint8 image")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
