"""Cloud-to-cloud alignment by principal-axis sign search.

The key observation: once both clouds are summarized by their principal
frames, the unknown correspondence reduces to a per-axis sign ambiguity.
For each of the 8 sign triples (i, j, k) in {-1, +1}^3 we build a linear
map whose columns are the signed generated-frame axes rescaled by
sqrt(lambda_g / lambda_s), invert it, and pre-multiply by the scene-frame
axes. The map therefore sends each one-sigma axis of the generated cloud
onto the matching (possibly flipped) one-sigma axis of the scene cloud,
carrying an anisotropic scale correction; it is not orthogonal in general.

Each candidate is completed into a full homogeneous transform by
translating the generated centroid to the origin first and the scene
centroid back in afterwards. Candidates are ranked by symmetric Chamfer
distance and the argmin wins; ties break toward the lexicographically
smallest sign triple with +1 ordered before -1.

A point-to-point ICP with identity initialization is included as a
baseline and as an optional polish stage for the sign-search result.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .clouds import (
    EIGENVALUE_CLAMP,
    Frame,
    PointCloud,
    PrincipalFrame,
    RigidishTransform,
    apply_transform,
    chamfer,
    hausdorff_unidirectional,
    principal_frame,
)
from .errors import SingularCandidateError

SIGN_TRIPLES: tuple[tuple[int, int, int], ...] = tuple(
    itertools.product((1, -1), repeat=3)
)

# Candidate losses are evaluated on at most this many points per cloud;
# the reported cd/uhd are always recomputed on the full clouds.
SUBSAMPLE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class AlignmentCandidate:
    signs: tuple[int, int, int]
    linear_block: np.ndarray
    loss: float
    det: float

    @property
    def proper(self) -> bool:
        return self.det > 0


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    """A chosen transform plus the full candidate table and quality metrics.

    ``cd`` is the symmetric Chamfer distance between the scene cloud and
    the transformed generated cloud, recomputed on the full clouds after
    selection. ``uhd`` is the worst nearest-neighbor Euclidean distance
    from the transformed generated cloud into the scene cloud.
    """

    transform: RigidishTransform
    chosen: AlignmentCandidate
    all_candidates: tuple[AlignmentCandidate, ...]
    cd: float
    uhd: float
    degenerate_axes: int
    method: str
    proper_only: bool = False

    def __post_init__(self):
        if not self.all_candidates:
            raise ValueError("candidate table must not be empty")
        pool = [c for c in self.all_candidates if c.proper or not self.proper_only]
        if pool and self.chosen.loss > min(c.loss for c in pool):
            raise ValueError("chosen candidate must achieve the minimum eligible loss")

    def to_json_dict(self) -> dict:
        return {
            "matrix": self.transform.matrix.tolist(),
            "candidates": [
                {
                    "signs": list(c.signs),
                    "det": c.det,
                    "loss": c.loss,
                }
                for c in self.all_candidates
            ],
            "cd": self.cd,
            "uhd": self.uhd,
            "degenerate_axes": self.degenerate_axes,
            "method": self.method,
            "proper_only": self.proper_only,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def candidate_linear_block(
    frame_s: PrincipalFrame, frame_g: PrincipalFrame, signs: tuple[int, int, int]
) -> np.ndarray:
    """Linear map sending signed generated one-sigma axes onto scene ones.

    Eigenvalues are clamped from below before the ratio is formed, so
    degenerate axes produce a unit scale correction instead of a blowup.
    """
    lam_s = np.maximum(frame_s.eigenvalues, EIGENVALUE_CLAMP)
    lam_g = np.maximum(frame_g.eigenvalues, EIGENVALUE_CLAMP)
    column_scale = np.asarray(signs, dtype=np.float64) * np.sqrt(lam_g / lam_s)
    signed_axes = frame_g.eigenvectors * column_scale
    det = np.linalg.det(signed_axes)
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise SingularCandidateError(f"candidate {signs} is not invertible")
    return frame_s.eigenvectors @ np.linalg.inv(signed_axes)


def compose_alignment_transform(
    frame_s: PrincipalFrame, frame_g: PrincipalFrame, block: np.ndarray
) -> RigidishTransform:
    """Wrap a linear block with the centroid-out/centroid-in translations."""
    recenter = RigidishTransform.from_translation(frame_s.centroid, Frame.SCENE)
    linear = RigidishTransform.from_linear(block)
    decenter = RigidishTransform.from_translation(-frame_g.centroid)
    return recenter @ linear @ decenter


def _subsample(cloud: PointCloud, limit: int, seed: int) -> PointCloud:
    if len(cloud) <= limit:
        return cloud
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(cloud), size=limit, replace=False))
    return PointCloud(cloud.points[idx], cloud.frame, cloud.label)


def align_pca_opt(
    p_s: PointCloud,
    p_g: PointCloud,
    proper_only: bool = False,
    refine: bool = False,
    refine_max_iters: int = 50,
    refine_tol: float = 1e-8,
    subsample_limit: int = SUBSAMPLE_LIMIT,
    seed: int = 0,
) -> AlignmentResult:
    """Align a generated cloud onto a scene cloud by exhaustive sign search.

    ``proper_only`` restricts the argmin to candidates with positive
    determinant (no reflections). ``refine`` runs an ICP polish from the
    selected transform; it is off by default and does not change the
    candidate table.
    """
    p_s.require_nonempty("align_pca_opt")
    p_g.require_nonempty("align_pca_opt")
    if p_s.frame is not Frame.SCENE or p_g.frame is not Frame.GENERATED:
        raise ValueError("align_pca_opt expects a scene target and a generated source")

    frame_s = principal_frame(p_s)
    frame_g = principal_frame(p_g)
    eval_s = _subsample(p_s, subsample_limit, seed)
    eval_g = _subsample(p_g, subsample_limit, seed + 1)

    candidates: list[AlignmentCandidate] = []
    transforms: list[RigidishTransform] = []
    failures: list[SingularCandidateError] = []
    for signs in SIGN_TRIPLES:
        try:
            block = candidate_linear_block(frame_s, frame_g, signs)
        except SingularCandidateError as err:
            failures.append(err)
            continue
        transform = compose_alignment_transform(frame_s, frame_g, block)
        loss = chamfer(eval_s, apply_transform(transform, eval_g))
        candidates.append(
            AlignmentCandidate(
                signs=signs,
                linear_block=block,
                loss=loss,
                det=float(np.linalg.det(block)),
            )
        )
        transforms.append(transform)
    if not candidates:
        raise SingularCandidateError(
            f"all {len(SIGN_TRIPLES)} candidates singular: {failures[0]}"
        )

    pool = [
        (cand, tf)
        for cand, tf in zip(candidates, transforms)
        if cand.proper or not proper_only
    ]
    if not pool:
        raise SingularCandidateError("no candidate with positive determinant")
    chosen, transform = pool[0]
    for cand, tf in pool[1:]:
        if cand.loss < chosen.loss:
            chosen, transform = cand, tf

    method = "pca-opt"
    if refine:
        # The polish is rigid, so it composes on top of whatever scale the
        # sign search already selected.
        transform = _icp_iterations(p_s, p_g, transform, refine_max_iters, refine_tol)
        method = "pca-opt+icp"

    aligned = apply_transform(transform, p_g)
    return AlignmentResult(
        transform=transform,
        chosen=chosen,
        all_candidates=tuple(candidates),
        cd=chamfer(p_s, aligned),
        uhd=hausdorff_unidirectional(aligned, p_s),
        degenerate_axes=frame_s.degenerate_axes + frame_g.degenerate_axes,
        method=method,
        proper_only=proper_only,
    )


def _kabsch(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best rigid (rotation + translation) map from source onto target."""
    c_src = source.mean(axis=0)
    c_dst = target.mean(axis=0)
    h = (source - c_src).T @ (target - c_dst)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, c_dst - rot @ c_src


def _icp_iterations(
    p_s: PointCloud,
    p_g: PointCloud,
    init: RigidishTransform,
    max_iters: int,
    tol: float,
) -> RigidishTransform:
    tree = cKDTree(p_s.points)
    rot = init.linear.copy()
    offset = init.translation.copy()
    moved = p_g.points @ rot.T + offset
    prev = np.inf
    for _ in range(max_iters):
        dists, idx = tree.query(moved, k=1)
        loss = float(np.mean(dists * dists))
        if prev - loss <= tol * max(prev, 1e-30) and np.isfinite(prev):
            break
        step_rot, step_t = _kabsch(moved, p_s.points[idx])
        rot = step_rot @ rot
        offset = step_rot @ offset + step_t
        moved = p_g.points @ rot.T + offset
        prev = loss
    matrix = np.eye(4)
    matrix[:3, :3] = rot
    matrix[:3, 3] = offset
    return RigidishTransform(matrix, p_s.frame)


def align_icp(
    p_s: PointCloud,
    p_g: PointCloud,
    max_iters: int = 50,
    tol: float = 1e-8,
) -> AlignmentResult:
    """Point-to-point ICP from identity: nearest-neighbor correspondences
    and an SVD rigid update per iteration, stopping when the relative loss
    change drops below ``tol``. The result carries a single candidate; its
    sign triple is a placeholder since no sign search happens here."""
    p_s.require_nonempty("align_icp")
    p_g.require_nonempty("align_icp")
    transform = _icp_iterations(
        p_s, p_g, RigidishTransform.identity(p_s.frame), max_iters, tol
    )
    aligned = apply_transform(transform, p_g)
    cd = chamfer(p_s, aligned)
    candidate = AlignmentCandidate(
        signs=(1, 1, 1),
        linear_block=transform.linear,
        loss=cd,
        det=float(np.linalg.det(transform.linear)),
    )
    return AlignmentResult(
        transform=transform,
        chosen=candidate,
        all_candidates=(candidate,),
        cd=cd,
        uhd=hausdorff_unidirectional(aligned, p_s),
        degenerate_axes=0,
        method="icp",
    )


def score_external_transform(
    p_s: PointCloud, p_g: PointCloud, transform
) -> AlignmentResult:
    """Wrap an externally computed 4x4 transform in the standard result
    shape, recomputing cd/uhd. This is the hook for third-party rigid
    registration backends; none is bundled."""
    p_s.require_nonempty("score_external_transform")
    p_g.require_nonempty("score_external_transform")
    if not isinstance(transform, RigidishTransform):
        transform = RigidishTransform(np.asarray(transform, dtype=np.float64), p_s.frame)
    aligned = apply_transform(transform, p_g)
    cd = chamfer(p_s, aligned)
    candidate = AlignmentCandidate(
        signs=(1, 1, 1),
        linear_block=transform.linear,
        loss=cd,
        det=float(np.linalg.det(transform.linear)),
    )
    return AlignmentResult(
        transform=transform,
        chosen=candidate,
        all_candidates=(candidate,),
        cd=cd,
        uhd=hausdorff_unidirectional(aligned, p_s),
        degenerate_axes=0,
        method="external",
    )
