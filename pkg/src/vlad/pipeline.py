"""End-to-end orchestration from a dataset sample to a scored rectangle.

One sample flows through six stages: acquire the scene object mask,
run the prompt chain to get the rod-impaled view, lift the generated
view to point clouds, align the generated object cloud onto the scene
cloud, carry the rod cloud through that transform and project it back
to pixels, then read the grasp off the projected rod's occlusion gap.
Stage errors become a failure tag on the run instead of aborting a
batch; a failed sample still counts in the success-rate denominator.
"""

from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .alignment import AlignmentResult, align_pca_opt
from .clouds import Frame, Label, PointCloud, apply_transform, save_xyz
from .datasets import Sample
from .errors import (
    DimensionMismatchError,
    EmptyLiftError,
    EmptyMaskError,
    EmptyProjectionError,
    GenerationRefusedError,
    IsotropicMaskError,
    MalformedResponseError,
    NoSamplesError,
    NoViableGraspError,
    ServiceUnavailableError,
    SingularCandidateError,
)
from .evaluation import EvalConfig, EvalReport, aggregate, score_sample
from .grasping import (
    GraspRectangle,
    find_discontinuities,
    fit_rod_axis,
    select_grasp,
)
from .lifting import (
    BinaryMask,
    CameraIntrinsics,
    DepthMap,
    backproject,
    project_to_mask,
    save_depth_f32,
    save_mask_png,
    save_rgb_png,
)
from .services import (
    GenerationClient,
    GenerationExchange,
    default_prompt_chain,
    predict_depth,
    run_prompt_chain,
    segment,
)

SERVICE_ERRORS = (
    ServiceUnavailableError,
    MalformedResponseError,
    GenerationRefusedError,
    DimensionMismatchError,
)

DEFAULT_DILATION = 1


class FailureStage(enum.Enum):
    GENERATION = "Generation"
    LIFT = "Lift"
    ALIGN = "Align"
    NO_ROD_DETECTED = "NoRodDetected"
    NO_VIABLE_GRASP = "NoViableGrasp"


@dataclass(frozen=True)
class PipelineRun:
    """Outcome of one sample: either a rectangle or a failure tag."""

    sample_id: str
    exchange: Optional[GenerationExchange]
    alignment: Optional[AlignmentResult]
    grasp: Optional[GraspRectangle]
    failure_stage: Optional[FailureStage]
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.grasp is None) == (self.failure_stage is None):
            raise ValueError("exactly one of grasp / failure_stage must be set")
        if self.grasp is not None:
            if self.exchange is None or self.alignment is None:
                raise ValueError("a grasp requires a recorded exchange and alignment")
            if not (math.isfinite(self.alignment.cd) and math.isfinite(self.alignment.uhd)):
                raise ValueError("a grasp requires finite alignment metrics")

    def to_json_dict(self, include_timings: bool = True) -> dict:
        record = {
            "sample_id": self.sample_id,
            "grasp": None if self.grasp is None else self.grasp.to_json_dict(),
            "failure_stage": None if self.failure_stage is None else self.failure_stage.value,
            "alignment": None if self.alignment is None else self.alignment.to_json_dict(),
            "provider": None if self.exchange is None else self.exchange.provider,
            "token_counts": None
            if self.exchange is None
            else self.exchange.token_counts.to_json_dict(),
        }
        if include_timings:
            record["timings"] = dict(self.timings)
        return record


@contextmanager
def _timed(timings: dict, key: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[key] = (time.perf_counter() - start) * 1000.0


def _dump_artifacts(debug_dir, sample_id: str, artifacts: dict) -> None:
    directory = Path(debug_dir) / sample_id
    directory.mkdir(parents=True, exist_ok=True)
    for name, value in artifacts.items():
        path = directory / name
        if isinstance(value, BinaryMask):
            save_mask_png(value, path)
        elif isinstance(value, DepthMap):
            save_depth_f32(value, path)
        elif isinstance(value, PointCloud):
            save_xyz(value, path)
        elif isinstance(value, np.ndarray):
            save_rgb_png(value, path)
        else:
            path.write_text(str(value) + "\n")


def run_sample(
    sample: Sample,
    cfg: EvalConfig,
    client: GenerationClient,
    *,
    intrinsics: Optional[CameraIntrinsics] = None,
    dilation: int = DEFAULT_DILATION,
    jaw_height: Optional[float] = None,
    proper_only: bool = False,
    refine: bool = False,
    three_step: bool = True,
    seed: int = 0,
    debug_dir=None,
) -> PipelineRun:
    """Run the full chain on one sample, mapping stage errors to tags.

    Only the scene's measured depth feeds the scene-side cloud; the
    predicted depth is used exclusively for the generated view.
    """
    timings: dict = {}
    artifacts: dict = {}
    exchange: Optional[GenerationExchange] = None
    alignment: Optional[AlignmentResult] = None

    def finish(grasp, stage):
        if debug_dir is not None:
            _dump_artifacts(debug_dir, sample.id, artifacts)
        return PipelineRun(
            sample_id=sample.id,
            exchange=exchange,
            alignment=alignment,
            grasp=grasp,
            failure_stage=stage,
            timings=timings,
        )

    rgb = sample.load_rgb()
    height, width = rgb.shape[:2]
    cam = intrinsics if intrinsics is not None else CameraIntrinsics.default_for(width, height)

    with _timed(timings, "mask"):
        try:
            if sample.object_mask is not None:
                scene_mask = sample.object_mask
            else:
                scene_mask = segment(client, rgb, Label.OBJECT, Frame.SCENE, sample.id)
        except SERVICE_ERRORS:
            return finish(None, FailureStage.LIFT)
        masked_rgb = rgb * scene_mask.bits[:, :, None].astype(np.uint8)
        artifacts["scene_object_mask.png"] = scene_mask
        artifacts["input_masked.png"] = masked_rgb

    with _timed(timings, "generation"):
        templates = default_prompt_chain(scene_mask)
        try:
            exchange = run_prompt_chain(
                client, masked_rgb, templates, sample.id, seed=seed, three_step=three_step
            )
        except SERVICE_ERRORS:
            return finish(None, FailureStage.GENERATION)
        artifacts["generated.png"] = exchange.output_image

    with _timed(timings, "lift"):
        try:
            depth_g = predict_depth(client, exchange.output_image, sample.id)
            mask_obj_g = segment(
                client, exchange.output_image, Label.OBJECT, Frame.GENERATED, sample.id
            )
            mask_rod_g = segment(
                client, exchange.output_image, Label.ROD, Frame.GENERATED, sample.id
            )
        except SERVICE_ERRORS:
            return finish(None, FailureStage.LIFT)
        artifacts["depth_generated.f32"] = depth_g
        artifacts["mask_object_generated.png"] = mask_obj_g
        artifacts["mask_rod_generated.png"] = mask_rod_g
        if mask_rod_g.is_empty:
            return finish(None, FailureStage.NO_ROD_DETECTED)
        try:
            cloud_scene = backproject(
                sample.depth, scene_mask, cam, Frame.SCENE, Label.OBJECT
            )
            cloud_obj_g = backproject(depth_g, mask_obj_g, cam, Frame.GENERATED, Label.OBJECT)
            cloud_rod_g = backproject(depth_g, mask_rod_g, cam, Frame.GENERATED, Label.ROD)
        except (EmptyLiftError, DimensionMismatchError):
            return finish(None, FailureStage.LIFT)
        artifacts["cloud_scene.xyz"] = cloud_scene
        artifacts["cloud_object_generated.xyz"] = cloud_obj_g
        artifacts["cloud_rod_generated.xyz"] = cloud_rod_g

    with _timed(timings, "align"):
        try:
            alignment = align_pca_opt(
                cloud_scene, cloud_obj_g, proper_only=proper_only, refine=refine
            )
        except SingularCandidateError:
            return finish(None, FailureStage.ALIGN)
        artifacts["alignment.json"] = alignment.to_json()

    with _timed(timings, "project"):
        cloud_rod_s = apply_transform(alignment.transform, cloud_rod_g)
        try:
            mask_rod_s = project_to_mask(cloud_rod_s, cam, width, height, dilation=dilation)
        except EmptyProjectionError:
            return finish(None, FailureStage.NO_ROD_DETECTED)
        artifacts["cloud_rod_scene.xyz"] = cloud_rod_s
        artifacts["mask_rod_scene.png"] = mask_rod_s

    with _timed(timings, "extract"):
        try:
            axis = fit_rod_axis(mask_rod_s)
            gaps = find_discontinuities(mask_rod_s, axis, scene_mask)
            grasp = select_grasp(
                gaps,
                axis,
                scene_mask,
                delta=cfg.delta,
                epsilon=cfg.epsilon,
                jaw_height=jaw_height,
            )
        except (EmptyMaskError, IsotropicMaskError):
            return finish(None, FailureStage.NO_ROD_DETECTED)
        except NoViableGraspError:
            return finish(None, FailureStage.NO_VIABLE_GRASP)
        artifacts["grasp.json"] = grasp.to_json()

    return finish(grasp, None)


def plot_overlay(rgb: np.ndarray, run: PipelineRun, annotations, path) -> None:
    """Save the sample image with annotation and prediction outlines."""
    from PIL import Image, ImageDraw

    image = Image.fromarray(np.ascontiguousarray(rgb)).convert("RGB")
    draw = ImageDraw.Draw(image)
    for annotation in annotations:
        rect = getattr(annotation, "rectangle", annotation)
        draw.polygon([tuple(c) for c in rect.corners()], outline=(90, 120, 220))
    if run.grasp is not None:
        draw.polygon([tuple(c) for c in run.grasp.corners()], outline=(60, 220, 60))
    image.save(path)


def run_batch(
    samples,
    cfg: EvalConfig,
    client: GenerationClient,
    *,
    workers: int = 1,
    intrinsics: Optional[CameraIntrinsics] = None,
    dilation: int = DEFAULT_DILATION,
    jaw_height: Optional[float] = None,
    proper_only: bool = False,
    refine: bool = False,
    three_step: bool = True,
    seed: int = 0,
    debug_dir=None,
    plot_dir=None,
    jsonl_path=None,
) -> tuple[EvalReport, list[PipelineRun]]:
    """Score every sample and aggregate; order follows the input listing.

    Samples are independent, so the result is the same at any worker
    count; the JSONL log is written sequentially after collection.
    """
    samples = list(samples)
    if not samples:
        raise NoSamplesError("run_batch needs at least one sample")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    def one(sample: Sample) -> PipelineRun:
        return run_sample(
            sample,
            cfg,
            client,
            intrinsics=intrinsics,
            dilation=dilation,
            jaw_height=jaw_height,
            proper_only=proper_only,
            refine=refine,
            three_step=three_step,
            seed=seed,
            debug_dir=debug_dir,
        )

    if workers == 1:
        runs = [one(sample) for sample in samples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, samples))

    scores = []
    for sample, run in zip(samples, runs):
        cd = run.alignment.cd if run.alignment is not None else None
        uhd = run.alignment.uhd if run.alignment is not None else None
        scores.append(
            score_sample(run.grasp, sample.annotations, cfg, sample.id, cd=cd, uhd=uhd)
        )

    if jsonl_path is not None:
        path = Path(jsonl_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for run, score in zip(runs, scores):
                line = {"run": run.to_json_dict(), "score": score.to_json_dict()}
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    if plot_dir is not None:
        directory = Path(plot_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for sample, run in zip(samples, runs):
            plot_overlay(
                sample.load_rgb(), run, sample.annotations, directory / f"{sample.id}.png"
            )

    return aggregate(scores), runs
