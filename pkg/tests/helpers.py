# -*- coding: utf-8 -*-
"""Общие построители данных для тестов."""

from typing import Callable, List, Sequence

import numpy as np

from grid.voxels import SparseTSDF
from scenes.camera import CameraIntrinsics, DepthFrame, look_at, render_depth
from scenes.primitives import Box, Plane, Scene, Sphere


def grid_coords(lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
    """Все координаты в [lo, hi) как (N, 3)."""
    axes = [np.arange(a, b) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)


def analytic_tsdf(sdf: Callable[[np.ndarray], np.ndarray], lo: Sequence[int],
                  hi: Sequence[int], voxel_size: float, truncation: float = 3.0,
                  band_only: bool = True) -> SparseTSDF:
    """
    TSDF по аналитическому SDF в центрах вокселей c * voxel_size.

    band_only=True оставляет записи с |d| < tau; иначе все воксели бокса
    (внутренние с d = -tau помечаются ненаблюдаемыми).
    """
    c = grid_coords(lo, hi)
    d = np.clip(sdf(c * voxel_size) / voxel_size, -truncation, truncation)
    keep = np.abs(d) < truncation if band_only else np.ones(len(c), dtype=bool)
    c, d = c[keep], d[keep]
    return SparseTSDF(c, d, np.ones(len(c)), d > -truncation, voxel_size=voxel_size,
                      truncation=truncation)


def corner_scene() -> Scene:
    """Угол маленькой комнаты: пол, две стены, бокс и сфера в кубе 1.2 м."""
    return Scene([
        Plane((0, 0, 1), 0.0),
        Plane((1, 0, 0), 0.0),
        Plane((0, 1, 0), 0.0),
        Box((0.45, 0.35, 0.15), (0.15, 0.12, 0.15)),
        Sphere((0.8, 0.7, 0.2), 0.2),
    ], np.zeros(3), np.array([1.2, 1.2, 1.0]))


def orbit_frames(scene: Scene, n: int, width: int = 40, height: int = 30,
                 radius: float = 0.9, height_m: float = 0.8) -> List[DepthFrame]:
    """Кадры с камер на дуге, смотрящих в центр сцены."""
    intr = CameraIntrinsics.from_fov(width, height, 70.0)
    target = np.array([0.5, 0.5, 0.15])
    frames = []
    for i in range(n):
        theta = np.pi / 8 + (np.pi / 4) * i / max(n - 1, 1)
        eye = np.array([radius * np.cos(theta) + 0.2, radius * np.sin(theta) + 0.2, height_m])
        frames.append(render_depth(scene, look_at(eye, target), intr))
    return frames


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Центральные конечные разности f по всем элементам x (x меняется на месте)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=['multi_index'])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / denom)
