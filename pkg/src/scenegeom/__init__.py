"""Geometry engine and benchmark harness for iterative 3D scene generation.

The package is organised around a small set of value types (cameras, depth
maps, masks, color images, point clouds) and pure functions over them:

- :mod:`scenegeom.geometry`   -- intrinsics, rigid poses, (un)projection
- :mod:`scenegeom.rasters`    -- depth/mask/color containers and file formats
- :mod:`scenegeom.pointcloud` -- lifting, merging, z-buffer rendering, PLY
- :mod:`scenegeom.warping`    -- viewpoint warps, occlusion-mask datasets,
                                 training-sample export
- :mod:`scenegeom.metrics`    -- scale-invariant depth loss, extrapolation
                                 MAE, view overlap
- :mod:`scenegeom.alignment`  -- scale-and-shift alignment, depth snapping
- :mod:`scenegeom.predictors` -- depth-completion baselines and the
                                 external-process predictor protocol
- :mod:`scenegeom.benchmark`  -- view-pair selection, evaluation, reports
- :mod:`scenegeom.scenegen`   -- orbit trajectories, the iterative scene
                                 build loop, splat-input export
- :mod:`scenegeom.worlds`     -- procedural test worlds and fixtures
"""

from scenegeom.geometry import Camera, Intrinsics, Pose
from scenegeom.rasters import ColorImage, DepthMap, Mask

__all__ = [
    "Camera",
    "ColorImage",
    "DepthMap",
    "Intrinsics",
    "Mask",
    "Pose",
]

__version__ = "0.1.0"
