"""Rectangle-annotated grasp dataset loading.

Two directory layouts are supported, named after the datasets whose
annotation conventions they follow:

Cornell-style (4-corner rectangles, human annotations)::

    root/
      <id>cpos.txt    4 lines of "x y" per rectangle, groups concatenated
      <id>r.png       RGB image
      <id>d.png       16-bit depth PNG, millimeters
      <id>mask.png    optional 8-bit object mask

Jacquard-style (parametric rectangles, simulated annotations)::

    root/
      <id>_grasps.txt   one "x;y;theta_deg;opening;jaw" per line
      <id>_RGB.png      RGB image
      <id>_depth.png    16-bit depth PNG (or <id>_depth.f32 raw float32)
      <id>_mask.png     optional 8-bit object mask

Samples are discovered from annotation files, ordered lexicographically
by id, and excluded when required images are missing or no valid
annotation survives parsing. Jacquard-style loading additionally drops
samples with fewer than ``min_annotations`` rectangles.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingDirectoryError, NoSamplesError
from .grasping import GraspRectangle
from .lifting import BinaryMask, DepthMap, load_depth_f32, load_depth_png, load_mask_png, load_rgb_png

log = logging.getLogger(__name__)

DEFAULT_MIN_ANNOTATIONS = 100


class Source(enum.Enum):
    """Where a grasp annotation came from."""

    HUMAN = "human"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class GraspAnnotation:
    rectangle: GraspRectangle
    source: Source


@dataclass(frozen=True, eq=False)
class Sample:
    """One dataset item: image references, depth, and its annotations."""

    id: str
    rgb_path: Path
    depth: DepthMap
    object_mask: BinaryMask | None
    annotations: tuple[GraspAnnotation, ...]

    def __post_init__(self):
        if not self.annotations:
            raise ValueError("sample must carry at least one annotation")
        if self.object_mask is not None and self.object_mask.bits.shape != self.depth.values.shape:
            raise ValueError("object mask and depth dimensions differ")

    def load_rgb(self) -> np.ndarray:
        return load_rgb_png(self.rgb_path)


# --- Cornell-style corner lists ----------------------------------------


def parse_cornell_rectangles(text: str) -> tuple[list[GraspRectangle], int]:
    """Parse concatenated 4-line corner groups.

    Returns the parsed rectangles and the number of groups dropped
    (incomplete trailing group, non-numeric or non-finite corners,
    degenerate geometry).
    """
    lines = [line for line in (raw.strip() for raw in text.splitlines()) if line]
    rects: list[GraspRectangle] = []
    dropped = 0
    for base in range(0, len(lines) - len(lines) % 4, 4):
        corners = []
        for line in lines[base : base + 4]:
            parts = line.split()
            if len(parts) != 2:
                corners = None
                break
            try:
                corners.append((float(parts[0]), float(parts[1])))
            except ValueError:
                corners = None
                break
        if corners is None or not np.isfinite(corners).all():
            dropped += 1
            continue
        try:
            rects.append(GraspRectangle.from_corners(corners))
        except ValueError:
            dropped += 1
    dropped += 1 if len(lines) % 4 else 0
    return rects, dropped


def format_cornell_rectangles(rects) -> str:
    lines = []
    for rect in rects:
        for u, v in rect.corners():
            lines.append(f"{float(u)!r} {float(v)!r}")
    return "\n".join(lines) + ("\n" if lines else "")


# --- Jacquard-style parametric lines ------------------------------------


def parse_jacquard_rectangles(text: str) -> tuple[list[GraspRectangle], int]:
    """Parse "x;y;theta_deg;opening;jaw" lines.

    The angle is given in degrees and lands in (-pi/2, pi/2] after
    normalization; opening maps to rectangle width, jaw size to height.
    """
    rects: list[GraspRectangle] = []
    dropped = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        parts = line.split(";")
        if len(parts) != 5:
            dropped += 1
            continue
        try:
            x, y, theta_deg, opening, jaw = (float(p) for p in parts)
            rects.append(
                GraspRectangle(
                    center=(x, y),
                    angle=math.radians(theta_deg),
                    width=opening,
                    height=jaw,
                )
            )
        except ValueError:
            dropped += 1
    return rects, dropped


def format_jacquard_rectangles(rects) -> str:
    lines = [
        f"{rect.center[0]!r};{rect.center[1]!r};"
        f"{math.degrees(rect.angle)!r};{rect.width!r};{rect.height!r}"
        for rect in rects
    ]
    return "\n".join(lines) + ("\n" if lines else "")


# --- Loaders ------------------------------------------------------------


def _read_optional_mask(path: Path) -> BinaryMask | None:
    return load_mask_png(path) if path.is_file() else None


def _filter_ids(ids) -> set[str] | None:
    if ids is None:
        return None
    return {str(i) for i in ids}


def load_cornell(root, ids=None) -> list[Sample]:
    """Load a Cornell-style root; see the module docstring for layout.

    ``ids`` optionally restricts loading to the listed sample ids (the
    unseen-class evaluation lists are plain id lists).
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"dataset root not found: {root}")
    wanted = _filter_ids(ids)
    samples = []
    for ann_path in sorted(root.glob("*cpos.txt")):
        sample_id = ann_path.name[: -len("cpos.txt")]
        if wanted is not None and sample_id not in wanted:
            continue
        rects, dropped = parse_cornell_rectangles(ann_path.read_text())
        if dropped:
            log.warning("%s: dropped %d malformed rectangle(s)", ann_path.name, dropped)
        if not rects:
            log.warning("%s: no valid rectangles, sample excluded", ann_path.name)
            continue
        rgb_path = root / f"{sample_id}r.png"
        depth_path = root / f"{sample_id}d.png"
        if not rgb_path.is_file() or not depth_path.is_file():
            log.warning("%s: missing rgb or depth image, sample excluded", sample_id)
            continue
        samples.append(
            Sample(
                id=sample_id,
                rgb_path=rgb_path,
                depth=load_depth_png(depth_path),
                object_mask=_read_optional_mask(root / f"{sample_id}mask.png"),
                annotations=tuple(
                    GraspAnnotation(rect, Source.HUMAN) for rect in rects
                ),
            )
        )
    if not samples:
        raise NoSamplesError(f"no loadable samples under {root}")
    return samples


def load_jacquard(root, min_annotations: int = DEFAULT_MIN_ANNOTATIONS, ids=None) -> list[Sample]:
    """Load a Jacquard-style root; see the module docstring for layout.

    Samples with fewer than ``min_annotations`` parsed rectangles are
    excluded (boundary inclusive: exactly ``min_annotations`` stays).
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"dataset root not found: {root}")
    if min_annotations < 1:
        raise ValueError("min_annotations must be at least 1")
    wanted = _filter_ids(ids)
    samples = []
    for ann_path in sorted(root.glob("*_grasps.txt")):
        sample_id = ann_path.name[: -len("_grasps.txt")]
        if wanted is not None and sample_id not in wanted:
            continue
        rects, dropped = parse_jacquard_rectangles(ann_path.read_text())
        if dropped:
            log.warning("%s: dropped %d malformed line(s)", ann_path.name, dropped)
        if len(rects) < min_annotations:
            log.info(
                "%s: %d annotation(s) below threshold %d, sample excluded",
                sample_id,
                len(rects),
                min_annotations,
            )
            continue
        rgb_path = root / f"{sample_id}_RGB.png"
        if not rgb_path.is_file():
            log.warning("%s: missing rgb image, sample excluded", sample_id)
            continue
        depth_png = root / f"{sample_id}_depth.png"
        depth_f32 = root / f"{sample_id}_depth.f32"
        if depth_png.is_file():
            depth = load_depth_png(depth_png)
        elif depth_f32.is_file():
            depth = load_depth_f32(depth_f32)
        else:
            log.warning("%s: missing depth image, sample excluded", sample_id)
            continue
        samples.append(
            Sample(
                id=sample_id,
                rgb_path=rgb_path,
                depth=depth,
                object_mask=_read_optional_mask(root / f"{sample_id}_mask.png"),
                annotations=tuple(
                    GraspAnnotation(rect, Source.SIMULATED) for rect in rects
                ),
            )
        )
    if not samples:
        raise NoSamplesError(f"no loadable samples under {root}")
    return samples


def load_dataset(kind: str, root, min_annotations: int = DEFAULT_MIN_ANNOTATIONS, ids=None) -> list[Sample]:
    if kind == "cornell":
        return load_cornell(root, ids=ids)
    if kind == "jacquard":
        return load_jacquard(root, min_annotations=min_annotations, ids=ids)
    raise ValueError(f"unknown dataset kind: {kind!r}")


# --- Layout inspection ---------------------------------------------------


@dataclass(frozen=True)
class DatasetSummary:
    kind: str
    sample_count: int
    annotation_count: int
    excluded: int

    def format_lines(self) -> list[str]:
        return [
            f"layout:      {self.kind}",
            f"samples:     {self.sample_count}",
            f"annotations: {self.annotation_count}",
            f"excluded:    {self.excluded}",
        ]


def describe_root(root, min_annotations: int = DEFAULT_MIN_ANNOTATIONS) -> DatasetSummary:
    """Detect the layout kind and summarize what would load.

    Jacquard-style annotation files win detection when both layouts are
    present (their suffix is the more specific).
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"dataset root not found: {root}")
    if list(root.glob("*_grasps.txt")):
        kind = "jacquard"
        discovered = len(list(root.glob("*_grasps.txt")))
        loader = lambda: load_jacquard(root, min_annotations=min_annotations)
    elif list(root.glob("*cpos.txt")):
        kind = "cornell"
        discovered = len(list(root.glob("*cpos.txt")))
        loader = lambda: load_cornell(root)
    else:
        raise NoSamplesError(f"no annotation files under {root}")
    try:
        samples = loader()
    except NoSamplesError:
        samples = []
    return DatasetSummary(
        kind=kind,
        sample_count=len(samples),
        annotation_count=sum(len(s.annotations) for s in samples),
        excluded=discovered - len(samples),
    )
