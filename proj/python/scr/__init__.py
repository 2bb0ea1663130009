"""Scene-coordinate regression relocalization: geometry, robust PnP, scene head and pipeline."""

from ._core import (
    Camera,
    SceneHead,
    ScrError,
    backproject_at_depth,
    compute_recall,
    fuse_poses,
    pose_error,
    project,
    ransac_pnp,
    read_poses,
    read_trajectory,
    run_pipeline,
    se3_exp,
    se3_log,
)

__all__ = [
    "Camera",
    "SceneHead",
    "ScrError",
    "backproject_at_depth",
    "compute_recall",
    "fuse_poses",
    "pose_error",
    "project",
    "ransac_pnp",
    "read_poses",
    "read_trajectory",
    "run_pipeline",
    "se3_exp",
    "se3_log",
]
