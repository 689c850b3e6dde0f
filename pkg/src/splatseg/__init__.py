"""Multi-view consistent instance segmentation on Gaussian splat scenes.

Pipeline: load a pre-trained splat scene with posed cameras and per-view
instance masks, assign every mask a globally consistent group id via a
3D-aware memory bank, train per-Gaussian identity encodings against the
associated masks, render consistent segmentation from any view, score it
against ground truth, and edit the scene group by group.
"""

__version__ = "0.1.0"

from .evaluation import EvalReport, boundary_iou, evaluate, iou, iou_drop
from .identity import (
    IdentityField,
    TrainConfig,
    classify_gaussians,
    load_identity,
    save_identity,
    train,
)
from .manipulation import Edit, apply, load_edit_script, select_group
from .memory_bank import (
    AssociationConfig,
    AssociationResult,
    MemoryBank,
    assign,
    associate,
    best_overlap,
)
from .projection import (
    CorrespondingSet,
    PatchGrid,
    ProjectedGaussians,
    corresponding_gaussians,
    project,
)
from .rasterizer import Render2D, backward_identity, project_footprint, render
from .scene_io import (
    Camera,
    DataError,
    FormatError,
    GaussianScene,
    LabelMap,
    load_cameras,
    load_gaussian_ply,
    load_label_maps,
    save_cameras,
    save_colorized,
    save_gaussian_ply,
    save_label_maps,
)
from .synthetic import (
    SyntheticSpec,
    association_accuracy,
    corrupt,
    generate,
    render_gt_masks,
)

__all__ = [
    "AssociationConfig",
    "AssociationResult",
    "Camera",
    "CorrespondingSet",
    "DataError",
    "Edit",
    "EvalReport",
    "FormatError",
    "GaussianScene",
    "IdentityField",
    "LabelMap",
    "MemoryBank",
    "PatchGrid",
    "ProjectedGaussians",
    "Render2D",
    "SyntheticSpec",
    "TrainConfig",
    "apply",
    "assign",
    "associate",
    "association_accuracy",
    "backward_identity",
    "best_overlap",
    "boundary_iou",
    "classify_gaussians",
    "corresponding_gaussians",
    "corrupt",
    "evaluate",
    "generate",
    "iou",
    "iou_drop",
    "load_cameras",
    "load_edit_script",
    "load_gaussian_ply",
    "load_identity",
    "load_label_maps",
    "project",
    "project_footprint",
    "render",
    "render_gt_masks",
    "save_cameras",
    "save_colorized",
    "save_gaussian_ply",
    "save_identity",
    "save_label_maps",
    "select_group",
    "train",
]
