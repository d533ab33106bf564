#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Самообучающие пары (вход, цель, маска).

Цель сливается из подмножества кадров скана, вход из вложенного в него
меньшего подмножества. Потери считаются только там, где цель наблюдала
пространство: маска = {v : target.d(v) > -tau}.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from errors import SamplingError
from fusion.integrator import FusionConfig, fuse
from grid.voxels import (CropSpec, SparseTSDF, VoxelCoord, VoxelSet, crop, crop_voxels,
                         DEFAULT_CROP_DIMS)

logger = logging.getLogger('SGNN.SelfSup')

T = TypeVar('T')
Seed = Union[int, Sequence[int]]

MIN_SURFACE_VOXELS = 100
BASELINE_BOXES = (1, 4)
BASELINE_BOX_FRACTION = (0.1, 0.4)


@dataclass(slots=True)
class ScanPair:
    """
    Одна обучающая пара.

    Attributes:
        input: Более неполный скан
        target: Менее неполный скан
        mask: Координаты, где применяются потери
    """

    input: SparseTSDF
    target: SparseTSDF
    mask: VoxelSet

    @classmethod
    def from_scans(cls, input_scan: SparseTSDF, target: SparseTSDF) -> 'ScanPair':
        return cls(input_scan, target, VoxelSet.observed_of(target))

    def check_mask(self) -> bool:
        """Совпадает ли маска с наблюдаемыми записями цели."""
        return self.mask == VoxelSet.observed_of(self.target)


def _subset_indices(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    k = max(1, int(round(fraction * n)))
    k = min(k, n)
    return np.sort(rng.choice(n, size=k, replace=False))


def subsample_frames(frames: Sequence[T], fraction: float, seed: Seed) -> List[T]:
    """
    Равномерно случайное подмножество кадров без возвращения.

    Размер round(fraction * n), не меньше 1; исходный порядок сохраняется.

    Raises:
        ValueError: при пустом списке или fraction вне (0, 1]
    """
    frames = list(frames)
    if not frames:
        raise ValueError("Нет кадров для выборки")
    if not 0 < fraction <= 1:
        raise ValueError(f"Доля кадров должна быть в (0, 1], получено {fraction}")
    if fraction == 1:
        return frames
    idx = _subset_indices(len(frames), fraction, np.random.default_rng(seed))
    return [frames[i] for i in idx]


def _seed_list(seed: Seed) -> List[int]:
    return [int(s) for s in (seed if isinstance(seed, (list, tuple)) else [seed])]


def build_pair(frames: Sequence, input_fraction: float, target_fraction: float,
               cfg: FusionConfig, seed: Seed) -> ScanPair:
    """
    Строит пару по вложенным подмножествам кадров.

    Args:
        frames: Кадры одного скана
        input_fraction: Доля кадров входа (от всех кадров)
        target_fraction: Доля кадров цели
        cfg: Параметры слияния
        seed: Зерно

    Returns:
        ScanPair; кадры входа являются подмножеством кадров цели

    Raises:
        ValueError: если не выполнено 0 < input_fraction <= target_fraction <= 1
    """
    if not 0 < input_fraction <= target_fraction <= 1:
        raise ValueError("Ожидалось 0 < input_fraction <= target_fraction <= 1, получено "
                         f"{input_fraction}, {target_fraction}")
    base = _seed_list(seed)
    target_frames = subsample_frames(frames, target_fraction, base + [0])
    input_frames = subsample_frames(target_frames, input_fraction / target_fraction, base + [1])
    logger.info(f"Пара: {len(input_frames)} кадров во входе, {len(target_frames)} в цели")
    target = fuse(target_frames, cfg)
    input_scan = fuse(input_frames, cfg)
    return ScanPair.from_scans(input_scan, target)


def _scan_box(pair: ScanPair) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    bounds = [b for b in (pair.input.bounds(), pair.target.bounds()) if b is not None]
    if not bounds:
        return None
    lo = np.min([b[0] for b in bounds], axis=0)
    hi = np.max([b[1] for b in bounds], axis=0)
    return lo, hi


def crop_origins(pair: ScanPair, dims: Sequence[int] = DEFAULT_CROP_DIMS,
                 min_surface_voxels: int = MIN_SURFACE_VOXELS) -> np.ndarray:
    """
    Все начала кропа, при которых входной кроп содержит не меньше
    min_surface_voxels поверхностных вокселей (|d| <= 1).

    Кандидаты перебираются по объемлющему боксу пары; если кроп больше бокса
    по оси, по этой оси остаётся единственное начало. Подсчёт ведётся через
    трёхмерную таблицу префиксных сумм.

    Returns:
        Массив (M, 3) начал в порядке x, y, z
    """
    dims = np.asarray(dims, dtype=np.int64)
    box = _scan_box(pair)
    if box is None:
        return np.zeros((0, 3), dtype=np.int64)
    lo, hi = box
    ext = hi - lo + 1
    surf = pair.input.coords[pair.input.surface_mask(1.0)] - lo
    counts = np.zeros(tuple(ext), dtype=np.int64)
    np.add.at(counts, (surf[:, 0], surf[:, 1], surf[:, 2]), 1)
    sat = np.zeros(tuple(ext + 1), dtype=np.int64)
    sat[1:, 1:, 1:] = counts.cumsum(0).cumsum(1).cumsum(2)

    n_orig = np.maximum(ext - dims + 1, 1)
    ox, oy, oz = np.meshgrid(*[np.arange(n) for n in n_orig], indexing='ij')
    a = [ox, oy, oz]
    b = [np.minimum(a[i] + dims[i], ext[i]) for i in range(3)]
    total = (sat[b[0], b[1], b[2]] - sat[a[0], b[1], b[2]] - sat[b[0], a[1], b[2]]
             - sat[b[0], b[1], a[2]] + sat[a[0], a[1], b[2]] + sat[a[0], b[1], a[2]]
             + sat[b[0], a[1], a[2]] - sat[a[0], a[1], a[2]])
    ok = np.argwhere(total >= min_surface_voxels)
    return ok + lo


def crop_pair(pair: ScanPair, spec: CropSpec) -> ScanPair:
    """Кропает вход, цель и маску одним боксом."""
    return ScanPair(crop(pair.input, spec), crop(pair.target, spec), crop_voxels(pair.mask, spec))


def random_crop_pair(pair: ScanPair, dims: Sequence[int] = DEFAULT_CROP_DIMS, seed: Seed = 0,
                     min_surface_voxels: int = MIN_SURFACE_VOXELS,
                     origins: Optional[np.ndarray] = None) -> ScanPair:
    """
    Случайный кроп пары.

    Начало выбирается равномерно среди позиций из crop_origins (их можно
    передать заранее посчитанными).

    Raises:
        ValueError: если размеры не положительны
        SamplingError: если допустимых позиций нет
    """
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"Размеры кропа должны быть положительными: {dims}")
    if origins is None:
        origins = crop_origins(pair, dims, min_surface_voxels)
    if len(origins) == 0:
        raise SamplingError(f"Нет позиции кропа {dims} с >= {min_surface_voxels} "
                            f"поверхностными вокселями")
    rng = np.random.default_rng(seed)
    origin = origins[rng.integers(len(origins))]
    spec = CropSpec(VoxelCoord(*[int(v) for v in origin]), dims)
    logger.debug(f"Кроп с началом {tuple(int(v) for v in origin)}")
    return crop_pair(pair, spec)


def crops_baseline_pair(target: SparseTSDF, seed: Seed,
                        boxes: Tuple[int, int] = BASELINE_BOXES,
                        box_fraction: Tuple[float, float] = BASELINE_BOX_FRACTION) -> ScanPair:
    """
    Пара без удаления кадров: вход = цель без нескольких случайных боксов.

    Args:
        target: Цель (непустая)
        seed: Зерно
        boxes: Диапазон числа удаляемых боксов (включительно)
        box_fraction: Диапазон размера бокса как доли протяжённости по каждой оси

    Returns:
        ScanPair с маской по всем наблюдаемым записям цели

    Raises:
        ValueError: если цель пуста
    """
    if len(target) == 0:
        raise ValueError("Пустая цель")
    lo, hi = target.bounds()
    ext = hi - lo + 1
    rng = np.random.default_rng(seed)
    n_boxes = int(rng.integers(boxes[0], boxes[1] + 1))
    removed = np.zeros(len(target), dtype=bool)
    for _ in range(n_boxes):
        size = np.maximum(np.round(rng.uniform(*box_fraction, size=3) * ext), 1).astype(np.int64)
        start = lo + np.array([rng.integers(0, max(e - s, 0) + 1) for e, s in zip(ext, size)])
        removed |= np.all((target.coords >= start) & (target.coords < start + size), axis=1)
    logger.debug(f"Удалено {n_boxes} боксов, {int(removed.sum())} записей")
    return ScanPair.from_scans(target.select(~removed), target)
