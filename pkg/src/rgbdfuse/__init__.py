"""Dual-sensor RGB-D depth fusion and sparse voxel reconstruction."""

from .depth import FusionConfig, fuse_depth, normalize_relative_to_metric, upscale_bilinear
from .errors import (
    BehindCameraError,
    CaptureError,
    ConfigError,
    DomainError,
    FormatError,
    InvalidArgumentError,
    ReconError,
    ShapeError,
    StageError,
    WeightsError,
)
from .frames import ColorFrame, ConfidenceFrame, DepthFrame, MaskFrame
from .geometry import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    compose_pose,
    invert_pose,
    look_at,
    project_point,
    transform_point,
    transform_points,
    unproject_frame,
    unproject_pixel,
)
from .pipeline import PipelineConfig, ThroughputReport, bench, process_frame, run_reconstruction
from .srcnn import ConvLayer, SrcnnWeights, conv2d_forward, srcnn_upscale
from .synth import Plane, SceneSpec, Sphere, orbit_path, synth_capture
from .voxel import (
    TriangleMesh,
    VoxelGrid,
    composite_background,
    grid_to_cloud,
    insert_cloud,
    insert_point,
    voxelize_mesh,
)

__version__ = "0.1.0"
