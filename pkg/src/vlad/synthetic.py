"""Parametric synthetic scenes with known grasp geometry.

Each case renders a small tabletop scene twice: once as the "observed"
sample (RGB, measured depth, object mask, one ground-truth grasp
annotation) and once as the "generated" counterpart in which a straight
rod has been painted through the object. The generated view may be
rotated and depth-scaled relative to the scene, which exercises the
alignment stage with a known answer. Because every surface is analytic,
the rectangle the extractor should produce is computable up front.

The object is an elliptical dome: integer-millimeter depth rising from
the rim toward the camera, on a flat background. The rod is a straight
band of constant depth equal to the dome apex, occluded wherever it
passes behind the object silhouette; the occlusion is the grasp gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .clouds import Frame, Label
from .datasets import format_cornell_rectangles
from .grasping import (
    GraspRectangle,
    NoViableGraspError,
    find_discontinuities,
    fit_rod_axis,
    select_grasp,
)
from .lifting import (
    BinaryMask,
    DepthMap,
    save_depth_f32,
    save_depth_png,
    save_mask_png,
    save_rgb_png,
)
from .services import (
    CHAIN_FILENAME,
    DEPTH_FILENAME,
    GENERATED_FILENAME,
    MASK_FILENAMES,
    WIRE_SCHEMA_VERSION,
    default_prompt_chain,
)

SIZE = 96
OBJECT_CENTER = (48.0, 48.0)
OBJECT_AXES = (18.0, 9.0)
BACKGROUND_MM = 1000
RIM_MM = 900
DOME_RISE_MM = 60
ROD_HALF_LENGTH = 40.0
ROD_HALF_THICKNESS = 1.45  # anywhere in (1, 2) rasterizes a 3 px band

BACKGROUND_GRAY = 30
OBJECT_GRAY = 180
ROD_GRAY = 240

# Loose-grip extraction thresholds that suit these scenes: the gap band
# is a sliver of the ellipse (roughly 50 of 500 px), so the default
# overlap floor of 0.2 would veto every construction.
DEMO_DELTA = 0.1
DEMO_EPSILON = 0.03


@dataclass(frozen=True)
class CaseSpec:
    """Parameters for one synthetic sample.

    Angles are scene-frame radians in (u, v) pixel coordinates.
    ``rotation`` and ``depth_scale`` describe how the generated view is
    transformed relative to the scene; ``rod_offset`` shifts the rod
    line perpendicular to its direction, letting it miss the object
    entirely (the unbroken-rod failure case).
    """

    name: str
    object_angle: float = math.radians(20.0)
    rod_angle: float = math.radians(110.0)
    rotation: float = 0.0
    depth_scale: float = 1.0
    rod_offset: float = 0.0
    size: int = SIZE


@dataclass(frozen=True)
class SyntheticCase:
    spec: CaseSpec
    scene_rgb: np.ndarray
    scene_depth: DepthMap
    scene_object_mask: BinaryMask
    reference_rod_mask: BinaryMask
    generated_rgb: np.ndarray
    generated_depth: DepthMap
    generated_object_mask: BinaryMask
    generated_rod_mask: BinaryMask
    expected: Optional[GraspRectangle]


def _pixel_grid(size: int):
    grid_v, grid_u = np.mgrid[0:size, 0:size]
    return grid_u.astype(float), grid_v.astype(float)


def _elliptical_radius_sq(size: int, angle: float) -> np.ndarray:
    grid_u, grid_v = _pixel_grid(size)
    rel_u = grid_u - OBJECT_CENTER[0]
    rel_v = grid_v - OBJECT_CENTER[1]
    along = rel_u * math.cos(angle) + rel_v * math.sin(angle)
    across = -rel_u * math.sin(angle) + rel_v * math.cos(angle)
    return (along / OBJECT_AXES[0]) ** 2 + (across / OBJECT_AXES[1]) ** 2


def render_object(size: int, angle: float):
    """Elliptical dome: (mask, integer-millimeter depth image)."""
    r_sq = _elliptical_radius_sq(size, angle)
    bits = r_sq <= 1.0
    depth_mm = np.full((size, size), BACKGROUND_MM, dtype=np.uint16)
    dome = RIM_MM - np.round(DOME_RISE_MM * (1.0 - r_sq[bits]))
    depth_mm[bits] = dome.astype(np.uint16)
    return BinaryMask(bits), depth_mm


def render_rod_line(size: int, angle: float, offset: float) -> BinaryMask:
    """Full rod band, before any occlusion by the object."""
    grid_u, grid_v = _pixel_grid(size)
    anchor_u = OBJECT_CENTER[0] - offset * math.sin(angle)
    anchor_v = OBJECT_CENTER[1] + offset * math.cos(angle)
    rel_u = grid_u - anchor_u
    rel_v = grid_v - anchor_v
    along = rel_u * math.cos(angle) + rel_v * math.sin(angle)
    across = -rel_u * math.sin(angle) + rel_v * math.cos(angle)
    bits = (np.abs(across) <= ROD_HALF_THICKNESS) & (np.abs(along) <= ROD_HALF_LENGTH)
    return BinaryMask(bits)


def _compose_rgb(size: int, object_mask: BinaryMask, rod_mask: Optional[BinaryMask]):
    rgb = np.full((size, size, 3), BACKGROUND_GRAY, dtype=np.uint8)
    rgb[object_mask.bits] = OBJECT_GRAY
    if rod_mask is not None:
        rgb[rod_mask.bits] = ROD_GRAY
    return rgb


def _dome_apex_m(depth_scale: float = 1.0) -> float:
    return depth_scale * (RIM_MM - DOME_RISE_MM) / 1000.0


def expected_rectangle(
    case_rod: BinaryMask,
    object_mask: BinaryMask,
    delta: float = DEMO_DELTA,
    epsilon: float = DEMO_EPSILON,
) -> Optional[GraspRectangle]:
    """Ground-truth rectangle: extract from the clean scene-frame masks."""
    try:
        axis = fit_rod_axis(case_rod)
        gaps = find_discontinuities(case_rod, axis, object_mask)
        return select_grasp(gaps, axis, object_mask, delta=delta, epsilon=epsilon)
    except NoViableGraspError:
        return None


def build_case(spec: CaseSpec) -> SyntheticCase:
    scene_mask, scene_mm = render_object(spec.size, spec.object_angle)
    scene_depth = DepthMap(scene_mm.astype(np.float64) / 1000.0)
    scene_rgb = _compose_rgb(spec.size, scene_mask, None)

    reference_line = render_rod_line(spec.size, spec.rod_angle, spec.rod_offset)
    reference_rod = BinaryMask(reference_line.bits & ~scene_mask.bits)

    gen_object_angle = spec.object_angle + spec.rotation
    gen_rod_angle = spec.rod_angle + spec.rotation
    gen_mask, gen_mm = render_object(spec.size, gen_object_angle)
    gen_line = render_rod_line(spec.size, gen_rod_angle, spec.rod_offset)
    gen_rod = BinaryMask(gen_line.bits & ~gen_mask.bits)

    gen_values = gen_mm.astype(np.float64) / 1000.0
    gen_values[gen_rod.bits] = _dome_apex_m()
    gen_values *= spec.depth_scale
    gen_depth = DepthMap(gen_values)
    gen_rgb = _compose_rgb(spec.size, gen_mask, gen_rod)

    return SyntheticCase(
        spec=spec,
        scene_rgb=scene_rgb,
        scene_depth=scene_depth,
        scene_object_mask=scene_mask,
        reference_rod_mask=reference_rod,
        generated_rgb=gen_rgb,
        generated_depth=gen_depth,
        generated_object_mask=gen_mask,
        generated_rod_mask=gen_rod,
        expected=expected_rectangle(reference_rod, scene_mask),
    )


def default_cases() -> list[CaseSpec]:
    return [
        CaseSpec(name="identity"),
        CaseSpec(
            name="rot30_scale08",
            rotation=math.radians(30.0),
            depth_scale=0.8,
        ),
        CaseSpec(name="unbroken", rod_offset=30.0),
    ]


def batch_cases(extra: int = 7) -> list[CaseSpec]:
    """Default trio plus ``extra`` solvable variants for batch tests."""
    cases = default_cases()
    for k in range(extra):
        obj = math.radians(15.0 * k - 40.0)
        cases.append(
            CaseSpec(
                name=f"spin{k}",
                object_angle=obj,
                rod_angle=obj + math.pi / 2,
                rotation=math.radians(8.0 * k - 25.0),
                depth_scale=0.85 + 0.05 * k,
            )
        )
    return cases


def _fallback_annotation(spec: CaseSpec) -> GraspRectangle:
    # Unsolvable constructions still need one dataset annotation; use the
    # grasp a centered rod would have produced.
    return GraspRectangle(
        center=OBJECT_CENTER,
        angle=spec.rod_angle,
        width=2.0 * OBJECT_AXES[1],
        height=3.0,
    )


def _write_chain_record(directory: Path, case: SyntheticCase) -> None:
    templates = default_prompt_chain(case.generated_object_mask)
    record = {
        "schema_version": WIRE_SCHEMA_VERSION,
        "provider": "synthetic",
        "t0_constraints": templates.t0_constraints,
        "reasoning": (
            "The object is an elongated dome; a straight rod through its "
            "midpoint, perpendicular to the long axis, marks where jaws "
            "can close."
        ),
        "t1_meta": templates.t1_meta,
        "t2_generated": (
            "Add a thin straight rod passing behind the object through "
            "its center, perpendicular to its long axis."
        ),
        "tc_constraints": templates.tc_constraints,
        "token_counts": {"output": 64, "reasoning": 32},
    }
    (directory / CHAIN_FILENAME).write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n"
    )


def write_demo_root(
    root, cases: Optional[Sequence[CaseSpec]] = None
) -> list[tuple[str, Optional[GraspRectangle]]]:
    """Write a Cornell-layout dataset plus replay fixtures under ``root``.

    Returns (sample_id, expected rectangle) per case, in written order.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    fixtures = root / "fixtures"
    manifest = []
    for spec in cases if cases is not None else default_cases():
        case = build_case(spec)
        sample_id = spec.name

        annotation = case.expected or _fallback_annotation(spec)
        (root / f"{sample_id}cpos.txt").write_text(
            format_cornell_rectangles([annotation])
        )
        save_rgb_png(case.scene_rgb, root / f"{sample_id}r.png")
        save_depth_png(case.scene_depth, root / f"{sample_id}d.png")
        save_mask_png(case.scene_object_mask, root / f"{sample_id}mask.png")

        directory = fixtures / sample_id
        directory.mkdir(parents=True, exist_ok=True)
        _write_chain_record(directory, case)
        save_rgb_png(case.generated_rgb, directory / GENERATED_FILENAME)
        save_depth_f32(case.generated_depth, directory / DEPTH_FILENAME)
        save_mask_png(
            case.generated_object_mask,
            directory / MASK_FILENAMES[(Label.OBJECT, Frame.GENERATED)],
        )
        save_mask_png(
            case.generated_rod_mask,
            directory / MASK_FILENAMES[(Label.ROD, Frame.GENERATED)],
        )
        manifest.append((sample_id, case.expected))
    return manifest
