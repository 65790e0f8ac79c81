"""Rod-impalement grasp detection: geometric core, datasets, and evaluation.

The workflow in one breath: lift an RGB-D observation and a generated
"rod through the object" view of it into 3D point clouds, align the two
object clouds with a principal-axis sign search scored by Chamfer
distance, carry the rod cloud through the winning transform, project it
back into the observed image, and read an oriented grasp rectangle off
the gap where the object occludes the rod.
"""

from .alignment import (
    AlignmentCandidate,
    AlignmentResult,
    align_icp,
    align_pca_opt,
    score_external_transform,
)
from .clouds import (
    Frame,
    Label,
    PointCloud,
    PrincipalFrame,
    RigidishTransform,
    apply_transform,
    chamfer,
    hausdorff_unidirectional,
    load_xyz,
    load_xyz_binary,
    principal_frame,
    save_xyz,
    save_xyz_binary,
)
from .datasets import (
    GraspAnnotation,
    Sample,
    Source,
    describe_root,
    load_cornell,
    load_dataset,
    load_jacquard,
)
from .errors import VladError
from .evaluation import EvalConfig, EvalReport, SampleScore, aggregate, rect_iou, score_sample
from .grasping import (
    Discontinuity,
    GraspRectangle,
    RodAxis,
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
)
from .pipeline import FailureStage, PipelineRun, run_batch, run_sample
from .services import (
    GenerationClient,
    GenerationExchange,
    HttpGenerationClient,
    PromptChain,
    RecordingClient,
    ReplayClient,
    TokenCounts,
    parse_client_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentCandidate",
    "AlignmentResult",
    "BinaryMask",
    "CameraIntrinsics",
    "DepthMap",
    "Discontinuity",
    "EvalConfig",
    "EvalReport",
    "FailureStage",
    "Frame",
    "GenerationClient",
    "GenerationExchange",
    "GraspAnnotation",
    "GraspRectangle",
    "HttpGenerationClient",
    "Label",
    "PipelineRun",
    "PointCloud",
    "PrincipalFrame",
    "PromptChain",
    "RecordingClient",
    "ReplayClient",
    "RigidishTransform",
    "RodAxis",
    "Sample",
    "SampleScore",
    "Source",
    "TokenCounts",
    "VladError",
    "aggregate",
    "align_icp",
    "align_pca_opt",
    "apply_transform",
    "backproject",
    "chamfer",
    "describe_root",
    "find_discontinuities",
    "fit_rod_axis",
    "hausdorff_unidirectional",
    "load_cornell",
    "load_dataset",
    "load_jacquard",
    "load_xyz",
    "load_xyz_binary",
    "parse_client_spec",
    "principal_frame",
    "project_to_mask",
    "rect_iou",
    "run_batch",
    "run_sample",
    "save_xyz",
    "save_xyz_binary",
    "score_external_transform",
    "score_sample",
    "select_grasp",
]
