"""Grasp scoring against rectangle annotations and run-level aggregation.

Success for a sample follows the rectangle-metric convention: the
predicted rectangle must reach an IoU of at least ``iou_threshold`` with
at least one annotation, and (unless disabled) its orientation must be
within ``angle_threshold`` of that annotation, angles compared modulo pi.

The aggregate report gives the success rate as a percentage with the
population standard deviation of the per-sample 0/100 indicator, plus
mean alignment metrics where available.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datasets import GraspAnnotation
from .errors import EmptyRecordsError, NoAnnotationsError
from .grasping import GraspRectangle, angle_difference

DEFAULT_IOU_THRESHOLD = 0.25
DEFAULT_ANGLE_THRESHOLD = math.pi / 6

# Collinear-edge tolerance for polygon clipping.
CLIP_EPS = 1e-9


@dataclass(frozen=True)
class EvalConfig:
    """Scoring thresholds plus pass-through grasp-extraction thresholds."""

    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    angle_threshold: float | None = DEFAULT_ANGLE_THRESHOLD
    delta: float = 0.1
    epsilon: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.angle_threshold is not None and self.angle_threshold <= 0:
            raise ValueError("angle_threshold must be positive or None")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class SampleScore:
    id: str
    best_iou: float
    matched_annotation_id: int | None
    success: bool
    cd: float | None = None
    uhd: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "best_iou": self.best_iou,
            "matched_annotation_id": self.matched_annotation_id,
            "success": self.success,
            "cd": self.cd,
            "uhd": self.uhd,
        }


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _edge_distance(a, b, p) -> float:
    # Positive on the interior side for counterclockwise clip polygons.
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])


def _clip_by_edge(poly: list, a, b) -> list:
    out = []
    for i in range(len(poly)):
        cur = poly[i]
        nxt = poly[(i + 1) % len(poly)]
        d_cur = _edge_distance(a, b, cur)
        d_nxt = _edge_distance(a, b, nxt)
        if d_cur >= -CLIP_EPS:
            out.append(cur)
            if d_nxt < -CLIP_EPS:
                t = d_cur / (d_cur - d_nxt)
                out.append(cur + t * (nxt - cur))
        elif d_nxt >= -CLIP_EPS:
            t = d_cur / (d_cur - d_nxt)
            out.append(cur + t * (nxt - cur))
    return out


def _ccw(corners: np.ndarray) -> np.ndarray:
    return corners if _shoelace(corners) >= 0 else corners[::-1]


def _intersection_area(rect_a: GraspRectangle, rect_b: GraspRectangle) -> float:
    subject = _ccw(rect_a.corners())
    clip = _ccw(rect_b.corners())
    poly = [subject[i] for i in range(len(subject))]
    for i in range(len(clip)):
        poly = _clip_by_edge(poly, clip[i], clip[(i + 1) % len(clip)])
        if len(poly) < 3:
            return 0.0
    return max(_shoelace(np.asarray(poly)), 0.0)


def rect_iou(a: GraspRectangle, b: GraspRectangle) -> float:
    """Intersection over union of two oriented rectangles.

    Computed by convex polygon clipping; arguments are ordered
    canonically first so the result is exactly symmetric.
    """
    if (a.center, a.angle, a.width, a.height) > (b.center, b.angle, b.width, b.height):
        a, b = b, a
    # Shoelace areas throughout (not width*height) so identical inputs
    # cancel exactly and self-IoU is 1.0 bit-for-bit.
    area_a = _shoelace(_ccw(a.corners()))
    area_b = _shoelace(_ccw(b.corners()))
    inter = _intersection_area(a, b)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def score_sample(
    predicted: GraspRectangle | None,
    annotations,
    cfg: EvalConfig,
    sample_id: str = "",
    cd: float | None = None,
    uhd: float | None = None,
) -> SampleScore:
    """Score one prediction against a sample's annotations.

    ``predicted`` may be None (an upstream failure); the record then
    carries best_iou 0 and success False. ``best_iou`` considers only
    annotations passing the angle criterion (all of them when the angle
    check is disabled); the matched id is reported only on success.
    """
    annotations = tuple(annotations)
    if not annotations:
        raise NoAnnotationsError(f"sample {sample_id!r} has no annotations")
    if predicted is None:
        return SampleScore(sample_id, 0.0, None, False, cd, uhd)
    best_iou = 0.0
    best_index: int | None = None
    for index, annotation in enumerate(annotations):
        rect = annotation.rectangle if isinstance(annotation, GraspAnnotation) else annotation
        if cfg.angle_threshold is not None:
            if angle_difference(predicted.angle, rect.angle) > cfg.angle_threshold:
                continue
        iou = rect_iou(predicted, rect)
        if iou > best_iou:
            best_iou = iou
            best_index = index
    success = best_iou >= cfg.iou_threshold
    return SampleScore(
        id=sample_id,
        best_iou=best_iou,
        matched_annotation_id=best_index if success else None,
        success=success,
        cd=cd,
        uhd=uhd,
    )


@dataclass(frozen=True)
class EvalReport:
    per_sample: tuple[SampleScore, ...]
    success_rate: float
    success_rate_std: float
    mean_cd: float | None
    mean_uhd: float | None

    def to_json_dict(self) -> dict:
        return {
            "per_sample": [score.to_json_dict() for score in self.per_sample],
            "success_rate": self.success_rate,
            "success_rate_std": self.success_rate_std,
            "mean_cd": self.mean_cd,
            "mean_uhd": self.mean_uhd,
            "samples": len(self.per_sample),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def save_json(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(self.to_json() + "\n")

    def format_table(self) -> str:
        def metric(value):
            return "n/a" if value is None else f"{value:.6f}"

        rows = [
            ("samples", str(len(self.per_sample))),
            ("successes", str(sum(1 for s in self.per_sample if s.success))),
            (
                "success rate",
                f"{self.success_rate:.2f} +/- {self.success_rate_std:.2f}",
            ),
            ("mean cd", metric(self.mean_cd)),
            ("mean uhd", metric(self.mean_uhd)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def aggregate(records) -> EvalReport:
    """Fold per-sample scores into a run-level report."""
    records = tuple(records)
    if not records:
        raise EmptyRecordsError("no sample scores to aggregate")
    indicator = np.array([100.0 if r.success else 0.0 for r in records])
    cds = [r.cd for r in records if r.cd is not None]
    uhds = [r.uhd for r in records if r.uhd is not None]
    return EvalReport(
        per_sample=records,
        success_rate=float(indicator.mean()),
        success_rate_std=float(indicator.std()),
        mean_cd=float(np.mean(cds)) if cds else None,
        mean_uhd=float(np.mean(uhds)) if uhds else None,
    )
