"""Объёмное слияние кадров глубины в разреженный TSDF."""

from fusion.integrator import FusionConfig, integrate, fuse, frame_tsdf

__all__ = ['FusionConfig', 'integrate', 'fuse', 'frame_tsdf']
