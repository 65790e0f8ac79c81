"""Randomized alignment experiments: recovery sweeps and the ICP ablation.

The recovery suite applies known similarity transforms (proper rotation,
translation, uniform scale) to anisotropic blobs and checks that the
sign-search alignment drives the Chamfer distance back to zero. The
ablation compares that alignment against plain ICP on rotation-heavy
rigid cases, where ICP's identity initialization falls into local
minima long before the sign search does.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .alignment import align_icp, align_pca_opt
from .clouds import Frame, Label, PointCloud

BLOB_SCALES = (4.0, 1.7, 0.6)  # distinct covariance spectrum, no degenerate axis
DEFAULT_TRIALS = 200
DEFAULT_ABLATION_CASES = 50
RECOVERY_THRESHOLD = 1e-6


def make_blob(rng: np.random.Generator, n_points: int = 260) -> np.ndarray:
    return rng.normal(size=(n_points, 3)) * np.asarray(BLOB_SCALES)


def random_proper_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotation_angle_deg(rotation: np.ndarray) -> float:
    cos = (np.trace(rotation) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


@dataclass(frozen=True)
class RecoveryTrial:
    seed: int
    rotation_deg: float
    scale: float
    cd: float
    uhd: float
    success: bool


def similarity_pair(
    rng: np.random.Generator,
    n_points: int = 260,
    scale_range: tuple[float, float] = (0.5, 2.0),
):
    """A scene blob and its similarity-transformed generated twin."""
    points = make_blob(rng, n_points)
    rotation = random_proper_rotation(rng)
    scale = float(rng.uniform(*scale_range))
    translation = rng.uniform(-5.0, 5.0, size=3)
    moved = points @ rotation.T * scale + translation
    scene = PointCloud(points, Frame.SCENE, Label.OBJECT)
    generated = PointCloud(moved, Frame.GENERATED, Label.OBJECT)
    return scene, generated, rotation, scale


def recovery_trial(
    seed: int,
    n_points: int = 260,
    scale_range: tuple[float, float] = (0.5, 2.0),
    threshold: float = RECOVERY_THRESHOLD,
    refine: bool = False,
) -> RecoveryTrial:
    rng = np.random.default_rng(seed)
    scene, generated, rotation, scale = similarity_pair(rng, n_points, scale_range)
    result = align_pca_opt(scene, generated, refine=refine)
    return RecoveryTrial(
        seed=seed,
        rotation_deg=rotation_angle_deg(rotation),
        scale=scale,
        cd=result.cd,
        uhd=result.uhd,
        success=result.cd < threshold,
    )


@dataclass(frozen=True)
class RecoverySummary:
    trials: tuple[RecoveryTrial, ...]
    elapsed_s: float

    @property
    def success_fraction(self) -> float:
        return sum(t.success for t in self.trials) / len(self.trials)

    @property
    def mean_cd(self) -> float:
        return float(np.mean([t.cd for t in self.trials]))

    @property
    def max_cd(self) -> float:
        return float(np.max([t.cd for t in self.trials]))

    def format_lines(self) -> list[str]:
        worst = max(self.trials, key=lambda t: t.cd)
        return [
            f"trials            {len(self.trials)}",
            f"recovered         {sum(t.success for t in self.trials)}"
            f" ({100.0 * self.success_fraction:.1f}%)",
            f"mean chamfer      {self.mean_cd:.3e}",
            f"worst chamfer     {self.max_cd:.3e}"
            f" (seed {worst.seed}, {worst.rotation_deg:.0f} deg, x{worst.scale:.2f})",
            f"elapsed           {self.elapsed_s:.2f} s",
        ]


def run_recovery(
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    n_points: int = 260,
    scale_range: tuple[float, float] = (0.5, 2.0),
    threshold: float = RECOVERY_THRESHOLD,
    refine: bool = False,
) -> RecoverySummary:
    start = time.perf_counter()
    results = tuple(
        recovery_trial(seed + k, n_points, scale_range, threshold, refine)
        for k in range(trials)
    )
    return RecoverySummary(results, elapsed_s=time.perf_counter() - start)


# --- ICP ablation -----------------------------------------------------------


@dataclass(frozen=True)
class AblationCase:
    seed: int
    rotation_deg: float
    cd_pca_opt: float
    cd_icp: float


@dataclass(frozen=True)
class AblationSummary:
    cases: tuple[AblationCase, ...]

    @property
    def mean_cd_pca_opt(self) -> float:
        return float(np.mean([c.cd_pca_opt for c in self.cases]))

    @property
    def mean_cd_icp(self) -> float:
        return float(np.mean([c.cd_icp for c in self.cases]))

    @property
    def ordering_holds(self) -> bool:
        return self.mean_cd_pca_opt < self.mean_cd_icp

    def format_table(self) -> str:
        lines = [f"{'case':>6} {'rot(deg)':>9} {'cd pca-opt':>12} {'cd icp':>12}"]
        for case in self.cases:
            lines.append(
                f"{case.seed:>6} {case.rotation_deg:>9.1f}"
                f" {case.cd_pca_opt:>12.3e} {case.cd_icp:>12.3e}"
            )
        lines.append(
            f"{'mean':>6} {'':>9} {self.mean_cd_pca_opt:>12.3e}"
            f" {self.mean_cd_icp:>12.3e}"
        )
        return "\n".join(lines)


def rigid_pair_with_angle(
    rng: np.random.Generator, angle_rad: float, n_points: int = 260
):
    """A rigid pair whose rotation magnitude is exactly ``angle_rad``."""
    points = make_blob(rng, n_points)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    rotation = (
        np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)
    )
    translation = rng.uniform(-3.0, 3.0, size=3)
    moved = points @ rotation.T + translation
    scene = PointCloud(points, Frame.SCENE, Label.OBJECT)
    generated = PointCloud(moved, Frame.GENERATED, Label.OBJECT)
    return scene, generated, rotation


def run_ablation(cases: int = DEFAULT_ABLATION_CASES, seed: int = 0) -> AblationSummary:
    """Rotation magnitudes sweep 0..180 degrees, so large rotations are
    guaranteed rather than left to sampling chance."""
    rows = []
    for k in range(cases):
        rng = np.random.default_rng(seed + 1000 + k)
        angle = np.pi * (k + 0.5) / cases
        scene, generated, rotation = rigid_pair_with_angle(rng, angle)
        pca = align_pca_opt(scene, generated)
        icp = align_icp(scene, generated)
        rows.append(
            AblationCase(
                seed=seed + 1000 + k,
                rotation_deg=rotation_angle_deg(rotation),
                cd_pca_opt=pca.cd,
                cd_icp=icp.cd,
            )
        )
    return AblationSummary(tuple(rows))
