# -*- coding: utf-8 -*-
"""marching.py

Извлечение изоповерхности d = 0 из разреженного TSDF.

Записи переносятся в плотный бокс с отступом в один воксель, отсутствующие
углы получают +tau; поверхность строит skimage.measure.marching_cubes
(классические таблицы Lorensen без разрешения неоднозначных кубов).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from grid.voxels import CropSpec, SparseTSDF, densify

logger = logging.getLogger('SGNN.Mesh')


@dataclass(slots=True)
class TriangleMesh:
    """
    Треугольная сетка.

    Attributes:
        vertices: (N, 3) координаты вершин в метрах
        triangles: (M, 3) индексы вершин
    """

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("Индекс вершины треугольника вне диапазона")

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def area(self) -> float:
        """Суммарная площадь треугольников (м^2)."""
        if self.is_empty:
            return 0.0
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())

    def edge_counts(self) -> np.ndarray:
        """Число треугольников у каждого неориентированного ребра."""
        if self.is_empty:
            return np.zeros(0, dtype=np.int64)
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return counts

    def is_closed_manifold(self) -> bool:
        """Каждое ребро принадлежит ровно двум треугольникам."""
        counts = self.edge_counts()
        return bool(len(counts)) and bool(np.all(counts == 2))


def marching_cubes(s: SparseTSDF) -> TriangleMesh:
    """
    Сетка изоповерхности d = 0.

    Args:
        s: Разреженный TSDF

    Returns:
        TriangleMesh в метрах (вершина = (индекс + начало бокса) * voxel_size);
        пустая сетка, если пересечений нуля нет
    """
    if len(s) == 0:
        return TriangleMesh()
    box = CropSpec.covering(s, pad=1)
    volume = densify(s, box, s.truncation).values[..., 0]
    if volume.min() > 0 or volume.max() < 0 or volume.min() == volume.max():
        logger.debug("Нет пересечений нуля, сетка пуста")
        return TriangleMesh()

    verts, faces, _normals, _values = measure.marching_cubes(
        volume, level=0.0, method='lorensen', allow_degenerate=False)
    vertices = (verts.astype(np.float64) + box.lo) * s.voxel_size
    mesh = TriangleMesh(vertices, faces)
    logger.info(f"Marching cubes: {len(mesh.vertices)} вершин, {len(mesh)} треугольников")
    return mesh
