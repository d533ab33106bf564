#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Объёмное слияние (Curless-Levoy) кадров глубины в SparseTSDF.

Каждый воксель, центр которого проецируется в валидный пиксель и лежит не
глубже tau вокселей за поверхностью, получает проективное расстояние
clamp((D - z) / voxel_size, -tau, tau); значения усредняются с весом 1 на кадр.
Центр вокселя с индексом c находится в точке c * voxel_size.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from errors import ConfigurationError
from grid.keys import pack_keys, lookup
from grid.voxels import SparseTSDF, DEFAULT_VOXEL_SIZE, DEFAULT_TRUNCATION
from scenes.camera import DepthFrame

logger = logging.getLogger('SGNN.Fusion')

# максимальное число вокселей-кандидатов, обрабатываемых за один проход
_CHUNK_VOXELS = 2_000_000


@dataclass(slots=True)
class FusionConfig:
    """
    Параметры слияния.

    Attributes:
        voxel_size: Размер вокселя, м
        truncation: Усечение tau, в вокселях
        max_depth: Максимальная учитываемая глубина, м
    """

    voxel_size: float = DEFAULT_VOXEL_SIZE
    truncation: float = DEFAULT_TRUNCATION
    max_depth: float = 10.0

    def __post_init__(self) -> None:
        if self.voxel_size <= 0 or self.truncation <= 0 or self.max_depth <= 0:
            raise ConfigurationError(
                f"Параметры слияния должны быть положительными: {self}")

    def empty_grid(self) -> SparseTSDF:
        return SparseTSDF.empty(self.voxel_size, self.truncation)


def _candidate_box(frame: DepthFrame, cfg: FusionConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Индексы вокселей (lo, hi включительно), покрывающие усечённую пирамиду кадра."""
    valid = (frame.depths > 0) & (frame.depths <= cfg.max_depth)
    far = float(frame.depths[valid].max()) + cfg.truncation * cfg.voxel_size
    k = frame.intrinsics
    # пиксели округляются до ближайшего: крайние центры проекций лежат на -0.5 и W - 0.5
    u_lo, u_hi = -0.5, k.width - 0.5
    v_lo, v_hi = -0.5, k.height - 0.5
    corners = np.array([[u_lo, v_lo], [u_hi, v_lo], [u_lo, v_hi], [u_hi, v_hi]])
    rays = np.stack([(corners[:, 0] - k.cx) / k.fx, (corners[:, 1] - k.cy) / k.fy,
                     np.ones(4)], axis=1)
    cam_pts = np.vstack([np.zeros(3), rays * far])
    world = cam_pts @ frame.rotation.T + frame.camera_position
    lo = np.floor(world.min(axis=0) / cfg.voxel_size).astype(np.int64) - 1
    hi = np.ceil(world.max(axis=0) / cfg.voxel_size).astype(np.int64) + 1
    return lo, hi


def frame_tsdf(frame: DepthFrame, cfg: FusionConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Проективный TSDF одного кадра.

    Returns:
        Кортеж (координаты (N, 3), значения sdf (N,)), координаты отсортированы по ключу
    """
    valid_px = (frame.depths > 0) & (frame.depths <= cfg.max_depth)
    if not np.any(valid_px):
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0)

    lo, hi = _candidate_box(frame, cfg)
    k = frame.intrinsics
    rot_t = frame.rotation.T
    cam_pos = frame.camera_position
    tau, vs = cfg.truncation, cfg.voxel_size

    ny, nz = hi[1] - lo[1] + 1, hi[2] - lo[2] + 1
    slab = max(1, _CHUNK_VOXELS // int(ny * nz))
    ys, zs = np.arange(lo[1], hi[1] + 1), np.arange(lo[2], hi[2] + 1)

    coords_out: List[np.ndarray] = []
    sdf_out: List[np.ndarray] = []
    for x0 in range(int(lo[0]), int(hi[0]) + 1, slab):
        xs = np.arange(x0, min(x0 + slab, int(hi[0]) + 1))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing='ij')
        coords = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        cam = (coords * vs - cam_pos) @ rot_t.T
        z = cam[:, 2]
        front = z > 1e-9
        zs_safe = np.where(front, z, 1.0)
        u = np.floor(k.fx * cam[:, 0] / zs_safe + k.cx + 0.5).astype(np.int64)
        v = np.floor(k.fy * cam[:, 1] / zs_safe + k.cy + 0.5).astype(np.int64)
        ok = front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
        idx = np.flatnonzero(ok)
        depth = frame.depths[v[idx], u[idx]]
        keep = (depth > 0) & (depth <= cfg.max_depth) & (depth - z[idx] > -tau * vs)
        idx, depth = idx[keep], depth[keep]
        if len(idx) == 0:
            continue
        coords_out.append(coords[idx])
        sdf_out.append(np.clip((depth - z[idx]) / vs, -tau, tau))

    if not coords_out:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0)
    coords = np.concatenate(coords_out)
    sdf = np.concatenate(sdf_out)
    order = np.argsort(pack_keys(coords), kind='stable')
    return coords[order], sdf[order]


def integrate(grid: SparseTSDF, frame: DepthFrame, cfg: FusionConfig) -> SparseTSDF:
    """
    Интегрирует один кадр в TSDF взвешенным усреднением.

    Args:
        grid: Текущий TSDF
        frame: Кадр глубины
        cfg: Параметры слияния

    Returns:
        Новый SparseTSDF; observed = (d > -tau)
    """
    if not np.isclose(grid.voxel_size, cfg.voxel_size, rtol=1e-6, atol=0):
        raise ConfigurationError(
            f"Размер вокселя сетки {grid.voxel_size} не совпадает с конфигурацией {cfg.voxel_size}")

    coords, sdf = frame_tsdf(frame, cfg)
    if len(coords) == 0:
        logger.debug("Кадр не содержит валидных вокселей")
        return grid

    keys = pack_keys(coords)
    idx, found = lookup(grid.keys, keys)

    d = grid.d.copy()
    w = grid.w.copy()
    hit = idx[found]
    d[hit] = (w[hit] * d[hit] + sdf[found]) / (w[hit] + 1.0)
    w[hit] += 1.0

    new = ~found
    all_coords = np.concatenate([grid.coords, coords[new]])
    all_d = np.concatenate([d, sdf[new]])
    all_w = np.concatenate([w, np.ones(int(new.sum()))])
    observed = all_d > -cfg.truncation
    logger.debug(f"Кадр обновил {int(found.sum())} и добавил {int(new.sum())} вокселей")
    return SparseTSDF(all_coords, all_d, all_w, observed,
                      voxel_size=grid.voxel_size, truncation=cfg.truncation, validate=False)


def fuse(frames: Iterable[DepthFrame], cfg: FusionConfig) -> SparseTSDF:
    """
    Последовательно сливает список кадров в пустую сетку.

    Raises:
        ValueError: если список кадров пуст
    """
    frames = list(frames)
    if not frames:
        raise ValueError("Для слияния нужен хотя бы один кадр")
    grid = cfg.empty_grid()
    for frame in frames:
        grid = integrate(grid, frame, cfg)
    logger.info(f"Слито {len(frames)} кадров: {len(grid)} вокселей, "
                f"наблюдаемых {int(grid.observed.sum())}")
    return grid
