# -*- coding: utf-8 -*-
"""primitives.py

Аналитические примитивы со знаковым расстоянием и генератор комнат.

Сцена задаётся списком примитивов (ось-ориентированный бокс, сфера,
полупространство-плоскость); SDF сцены = минимум SDF примитивов. Единицы -
метры, ось z направлена вверх, пол лежит в плоскости z = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger('SGNN.Scenes')


@dataclass(slots=True)
class Box:
    """Ось-ориентированный бокс: центр и половины размеров."""

    center: np.ndarray
    half_size: np.ndarray
    kind: str = field(default='box', init=False)

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.half_size = np.asarray(self.half_size, dtype=np.float64).reshape(3)
        if np.any(self.half_size <= 0):
            raise ValueError("Размеры бокса должны быть положительными")

    def sdf(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(points - self.center) - self.half_size
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.center - self.half_size, self.center + self.half_size

    def params(self) -> List[float]:
        return [*self.center, *self.half_size]


@dataclass(slots=True)
class Sphere:
    center: np.ndarray
    radius: float
    kind: str = field(default='sphere', init=False)

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise ValueError("Радиус сферы должен быть положительным")

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def params(self) -> List[float]:
        return [*self.center, self.radius]


@dataclass(slots=True)
class Plane:
    """Полупространство n·p >= offset; нормаль смотрит в свободное пространство."""

    normal: np.ndarray
    offset: float
    kind: str = field(default='plane', init=False)

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("Нормаль плоскости не может быть нулевой")
        self.normal = n / norm
        self.offset = float(self.offset)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal - self.offset

    def bounds(self) -> None:
        return None

    def params(self) -> List[float]:
        return [*self.normal, self.offset]


Primitive = Union[Box, Sphere, Plane]


@dataclass(slots=True)
class Scene:
    """
    Сцена из примитивов.

    Attributes:
        primitives: Список примитивов
        extent_min: Нижний угол заявленной области сцены (м)
        extent_max: Верхний угол заявленной области сцены (м)
    """

    primitives: List[Primitive]
    extent_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    extent_max: np.ndarray = field(default_factory=lambda: np.full(3, 6.0))

    def __post_init__(self) -> None:
        self.extent_min = np.asarray(self.extent_min, dtype=np.float64).reshape(3)
        self.extent_max = np.asarray(self.extent_max, dtype=np.float64).reshape(3)

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """SDF сцены в точках (..., 3); пустая сцена = +inf."""
        points = np.asarray(points, dtype=np.float64)
        result = np.full(points.shape[:-1], np.inf)
        for prim in self.primitives:
            result = np.minimum(result, prim.sdf(points))
        return result

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.extent_min + self.extent_max)

    def contains_box(self, lo: np.ndarray, hi: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(lo >= self.extent_min - tol) and np.all(hi <= self.extent_max + tol))


def make_room_scene(seed: int) -> Scene:
    """
    Генерирует детерминированную комнату: пол, 2-4 стены и 2-6 предметов мебели.

    Args:
        seed: Зерно генератора

    Returns:
        Scene с размерами комнаты 3-6 м по горизонтали
    """
    rng = np.random.default_rng(seed)
    width, depth = rng.uniform(3.0, 6.0, size=2)
    height = rng.uniform(2.4, 3.0)

    prims: List[Primitive] = [Plane((0.0, 0.0, 1.0), 0.0)]
    walls = [
        Plane((1.0, 0.0, 0.0), 0.0),
        Plane((-1.0, 0.0, 0.0), -width),
        Plane((0.0, 1.0, 0.0), 0.0),
        Plane((0.0, -1.0, 0.0), -depth),
    ]
    n_walls = int(rng.integers(2, 5))
    for i in sorted(rng.choice(4, size=n_walls, replace=False)):
        prims.append(walls[i])

    n_furniture = int(rng.integers(2, 7))
    for _ in range(n_furniture):
        if rng.random() < 0.7:
            half = np.array([rng.uniform(0.15, 0.6), rng.uniform(0.15, 0.6),
                             rng.uniform(0.2, 0.5)])
            margin = half[:2] + 0.1
            cx = rng.uniform(margin[0], width - margin[0])
            cy = rng.uniform(margin[1], depth - margin[1])
            prims.append(Box((cx, cy, half[2]), half))
        else:
            r = rng.uniform(0.15, 0.4)
            cx = rng.uniform(r + 0.1, width - r - 0.1)
            cy = rng.uniform(r + 0.1, depth - r - 0.1)
            prims.append(Sphere((cx, cy, r), r))

    scene = Scene(prims, np.zeros(3), np.array([width, depth, height]))
    logger.debug(f"Сцена seed={seed}: {len(prims)} примитивов, "
                 f"размер {width:.2f}x{depth:.2f}x{height:.2f} м")
    return scene
