"""Layered space-time radiance fields for multi-view video.

The package covers the full pipeline: synthetic capture generation,
scene parsing into per-entity bounding boxes and labels, training of
per-layer deformation + radiance networks, layered volume rendering,
space-time editing, evaluation, and an HTTP preview service.
"""

from .cameras import CameraModel, camera_from_dict, camera_to_dict, look_at
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_cameras, load_dataset, save_dataset
from .editing import (
    EditScript,
    LayerEdit,
    compose_affine,
    compose_scene,
    load_script,
    rotation_about,
    save_script,
    scale_about,
    translation,
    validate_script,
)
from .evaluation import alpha_label_iou, evaluate, render_view
from .field import FieldConfig, build_entity_field, desk_field_config
from .metrics import mae, psnr, ssim
from .parsing import (
    FusionError,
    ParseError,
    ParsedScene,
    VoxelGrid,
    fuse_tracking,
    parse_scene,
    refine_mask,
    space_carve,
)
from .rendering import (
    LayerInstance,
    RenderConfig,
    desk_render_config,
    layers_at_frame,
    render_image,
)
from .synthetic import (
    SceneSpec,
    carve_scene,
    crossing_scene,
    desk_scene,
    synthesize_scene,
)
from .training import TrainConfig, TrainResult, build_fields, desk_train_config, train

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "Dataset",
    "EditScript",
    "FieldConfig",
    "FusionError",
    "LayerEdit",
    "LayerInstance",
    "ParseError",
    "ParsedScene",
    "RenderConfig",
    "SceneSpec",
    "TrainConfig",
    "TrainResult",
    "VoxelGrid",
    "alpha_label_iou",
    "build_entity_field",
    "build_fields",
    "camera_from_dict",
    "camera_to_dict",
    "carve_scene",
    "compose_affine",
    "compose_scene",
    "crossing_scene",
    "desk_field_config",
    "desk_render_config",
    "desk_scene",
    "desk_train_config",
    "evaluate",
    "fuse_tracking",
    "layers_at_frame",
    "load_cameras",
    "load_checkpoint",
    "load_dataset",
    "load_script",
    "look_at",
    "mae",
    "parse_scene",
    "psnr",
    "refine_mask",
    "render_image",
    "render_view",
    "rotation_about",
    "save_checkpoint",
    "save_dataset",
    "save_script",
    "scale_about",
    "space_carve",
    "ssim",
    "synthesize_scene",
    "train",
    "translation",
    "validate_script",
]
