"""Процедурные синтетические сцены и рендер глубины."""

from scenes.primitives import Box, Sphere, Plane, Scene, make_room_scene
from scenes.camera import (
    CameraIntrinsics, DepthFrame, look_at, render_depth, sample_trajectory,
)

__all__ = [
    'Box', 'Sphere', 'Plane', 'Scene', 'make_room_scene',
    'CameraIntrinsics', 'DepthFrame', 'look_at', 'render_depth', 'sample_trajectory',
]
