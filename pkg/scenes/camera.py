# -*- coding: utf-8 -*-
"""camera.py

Модель камеры-обскуры, кадры глубины, рендер сферической трассировкой и
генерация траекторий сканирования.

Соглашения: поза - матрица 4x4 «камера -> мир»; оси камеры как в OpenCV
(x вправо, y вниз, z вперёд); глубина пикселя - z-глубина точки попадания
(как у датчиков глубины), 0 - невалидный пиксель.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from errors import SamplingError
from scenes.primitives import Scene

logger = logging.getLogger('SGNN.Scenes')

TRACE_TOLERANCE = 1e-4
MAX_RANGE = 10.0
MAX_TRACE_STEPS = 1024
MIN_CLEARANCE = 0.3


@dataclass(slots=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        self.width, self.height = int(self.width), int(self.height)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("Фокусные расстояния должны быть положительными")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("Главная точка должна лежать внутри изображения")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float = 60.0) -> 'CameraIntrinsics':
        """Камера с заданным горизонтальным углом обзора и центральной главной точкой."""
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    def pixel_rays(self) -> np.ndarray:
        """Лучи (H, W, 3) в системе камеры с компонентой z = 1."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = (u - self.cx) / self.fx
        rays[..., 1] = (v - self.cy) / self.fy
        rays[..., 2] = 1.0
        return rays


@dataclass(slots=True)
class DepthFrame:
    """
    Кадр глубины: растр (height, width) в метрах, внутренние параметры и поза.
    """

    depths: np.ndarray
    intrinsics: CameraIntrinsics
    pose: np.ndarray

    def __post_init__(self) -> None:
        self.depths = np.asarray(self.depths, dtype=np.float64)
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(4, 4)
        k = self.intrinsics
        if self.depths.shape != (k.height, k.width):
            raise ValueError(f"Растр {self.depths.shape} не совпадает с "
                             f"размером камеры {(k.height, k.width)}")
        if np.any(self.depths < 0) or not np.all(np.isfinite(self.depths)):
            raise ValueError("Глубина должна быть конечной и неотрицательной")
        check_rigid(self.pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def camera_position(self) -> np.ndarray:
        return self.pose[:3, 3]

    def backproject(self) -> np.ndarray:
        """Мировые координаты (N, 3) всех валидных пикселей."""
        rays = self.intrinsics.pixel_rays()
        valid = self.depths > 0
        cam = rays[valid] * self.depths[valid][:, None]
        return cam @ self.rotation.T + self.camera_position


def check_rigid(pose: np.ndarray, tol: float = 1e-6) -> None:
    """Проверяет, что поза - жёсткое преобразование (R ортонормирована, det = +1)."""
    r = pose[:3, :3]
    if not np.allclose(r.T @ r, np.eye(3), atol=tol) or abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("Блок поворота позы не ортонормирован или det != +1")
    if not np.allclose(pose[3], [0, 0, 0, 1]):
        raise ValueError("Последняя строка позы должна быть (0, 0, 0, 1)")


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """
    Поза камеры в точке eye, смотрящей на target.

    Returns:
        Матрица 4x4 «камера -> мир»
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(float(forward @ up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2] = right, down, forward
    pose[:3, 3] = eye
    return pose


def render_depth(scene: Scene, pose: np.ndarray, intrinsics: CameraIntrinsics,
                 tolerance: float = TRACE_TOLERANCE, max_range: float = MAX_RANGE,
                 max_steps: int = MAX_TRACE_STEPS) -> DepthFrame:
    """
    Рендерит кадр глубины сферической трассировкой аналитического SDF.

    Args:
        scene: Сцена
        pose: Поза камеры 4x4
        intrinsics: Внутренние параметры
        tolerance: Порог попадания по SDF (м)
        max_range: Дальность, после которой луч считается промахом (м)

    Returns:
        DepthFrame; промахи имеют глубину 0
    """
    pose = np.asarray(pose, dtype=np.float64)
    check_rigid(pose)
    rays = intrinsics.pixel_rays().reshape(-1, 3)
    ray_len = np.linalg.norm(rays, axis=1)
    dirs = (rays / ray_len[:, None]) @ pose[:3, :3].T
    origin = pose[:3, 3]

    t = np.zeros(len(dirs))
    hit = np.zeros(len(dirs), dtype=bool)
    active = np.ones(len(dirs), dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        dist = scene.sdf(origin + t[idx, None] * dirs[idx])
        done = dist < tolerance
        hit[idx[done]] = True
        t[idx[~done]] += dist[~done]
        active[idx[done]] = False
        active[idx[~done]] = t[idx[~done]] <= max_range

    depth = np.where(hit & (t <= max_range), t / ray_len, 0.0)
    return DepthFrame(depth.reshape(intrinsics.height, intrinsics.width), intrinsics, pose)


def sample_trajectory(scene: Scene, n: int, seed: int,
                      clearance: float = MIN_CLEARANCE) -> List[np.ndarray]:
    """
    Траектория сканирования: облёт вокруг центра комнаты со взглядом внутрь.

    Args:
        scene: Сцена
        n: Число поз (>= 1)
        seed: Зерно генератора
        clearance: Минимальное расстояние камеры до поверхностей (м)

    Returns:
        Список поз 4x4
    """
    if n < 1:
        raise ValueError("Число поз траектории должно быть >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = scene.extent_min, scene.extent_max
    center = scene.center
    span = float(min(hi[0] - lo[0], hi[1] - lo[1]))
    radius = rng.uniform(0.2, 0.35) * span
    height = rng.uniform(1.2, 1.7)
    theta0 = rng.uniform(0, 2 * np.pi)

    poses = []
    for i in range(n):
        theta = theta0 + 2 * np.pi * i / n + rng.normal(0, 0.05)
        eye = None
        for attempt in range(200):
            r = radius * (1.0 - attempt / 250)
            cand = np.array([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta),
                             height + rng.normal(0, 0.05)])
            if attempt > 50:
                cand = rng.uniform(lo + clearance, hi - clearance)
            if scene.sdf(cand[None])[0] > clearance:
                eye = cand
                break
        if eye is None:
            raise SamplingError("Не удалось найти свободную позицию камеры")
        target = np.array([center[0] + rng.normal(0, 0.2 * span),
                           center[1] + rng.normal(0, 0.2 * span),
                           rng.uniform(0.3, 0.9)])
        if np.linalg.norm(target - eye) < 0.1:
            target = center.copy()
            target[2] = 0.5
        poses.append(look_at(eye, target))
    logger.debug(f"Сгенерирована траектория из {n} поз (seed={seed})")
    return poses
