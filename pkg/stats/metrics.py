#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Метрики качества завершения.

Четыре маскированные l1-ошибки по беззнаковым расстояниям (весь объём,
ненаблюдаемое пространство, окрестность цели, окрестность предсказания) и
полнота завершения на синтетических сценах с известной геометрией.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np
from skimage.morphology import binary_dilation

from grid.keys import pack_keys
from grid.voxels import CropSpec, SparseTSDF, VoxelSet, densify
from scenes.primitives import Scene

logger = logging.getLogger('SGNN.Stats')

GLOBAL_TRUNCATION = 3.0
NEAR_THRESHOLD = 1.0

_NEIGHBORS = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
                      dtype=np.int64)


@dataclass(slots=True)
class MetricsReport:
    """
    Отчёт по l1-метрикам (в единицах вокселя) и размерам областей.

    Пустая область даёт значение 0 при нулевом счётчике.
    """

    l1_entire_volume: float = 0.0
    l1_unobserved: float = 0.0
    l1_target: float = 0.0
    l1_predicted: float = 0.0
    n_entire_volume: int = 0
    n_unobserved: int = 0
    n_target: int = 0
    n_predicted: int = 0
    completion_recall: Optional[float] = None

    @classmethod
    def csv_header(cls) -> str:
        return ','.join(f.name for f in fields(cls))

    def csv_row(self) -> str:
        return ','.join('' if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))
                        for v in asdict(self).values())

    def table(self) -> str:
        rows = [('Весь объём', self.l1_entire_volume, self.n_entire_volume),
                ('Ненаблюдаемое', self.l1_unobserved, self.n_unobserved),
                ('Окрестность цели', self.l1_target, self.n_target),
                ('Окрестность предсказания', self.l1_predicted, self.n_predicted)]
        lines = [f"{'Область':<26}{'l1':>10}{'вокселей':>12}"]
        lines += [f"{name:<26}{value:>10.4f}{count:>12d}" for name, value, count in rows]
        if self.completion_recall is not None:
            lines.append(f"{'Полнота завершения':<26}{self.completion_recall:>10.4f}")
        return '\n'.join(lines)


def _observed_grid(s: SparseTSDF, box: CropSpec) -> np.ndarray:
    grid = np.zeros(box.dims, dtype=bool)
    sel = box.contains(s.coords) & s.observed
    rel = s.coords[sel] - box.lo
    grid[rel[:, 0], rel[:, 1], rel[:, 2]] = True
    return grid


def _mean(err: np.ndarray, region: np.ndarray):
    n = int(region.sum())
    return (float(err[region].mean()) if n else 0.0), n


def l1_metrics(pred: SparseTSDF, target: SparseTSDF, box: CropSpec,
               input_scan: Optional[SparseTSDF] = None) -> MetricsReport:
    """
    l1-метрики в боксе.

    Оба TSDF переводятся в плотные сетки с заполнением +3 и берутся по модулю.
    Учитываются только воксели, наблюдаемые в цели. Ненаблюдаемая область:
    воксели, не наблюдаемые во входе (если он задан), иначе воксели, соседние
    (26-связность) с ненаблюдаемыми вокселями цели в боксе.

    Raises:
        ValueError: при разном размере вокселя
    """
    if not np.isclose(pred.voxel_size, target.voxel_size, rtol=1e-6, atol=0):
        raise ValueError(f"Размеры вокселя различаются: {pred.voxel_size} и {target.voxel_size}")
    if input_scan is not None and not np.isclose(input_scan.voxel_size, target.voxel_size,
                                                 rtol=1e-6, atol=0):
        raise ValueError("Размер вокселя входа отличается от цели")

    p = np.minimum(np.abs(densify(pred, box, GLOBAL_TRUNCATION).values[..., 0]), GLOBAL_TRUNCATION)
    t = np.minimum(np.abs(densify(target, box, GLOBAL_TRUNCATION).values[..., 0]), GLOBAL_TRUNCATION)
    err = np.abs(p - t)
    valid = _observed_grid(target, box)

    if input_scan is not None:
        unobserved = valid & ~_observed_grid(input_scan, box)
    else:
        unobserved = valid & binary_dilation(~valid, np.ones((3, 3, 3), dtype=bool))

    report = MetricsReport()
    report.l1_entire_volume, report.n_entire_volume = _mean(err, valid)
    report.l1_unobserved, report.n_unobserved = _mean(err, unobserved)
    report.l1_target, report.n_target = _mean(err, valid & (t <= NEAR_THRESHOLD))
    report.l1_predicted, report.n_predicted = _mean(err, valid & (p <= NEAR_THRESHOLD))
    logger.debug(f"Метрики: {report}")
    return report


def _dilated_surface(s: SparseTSDF) -> VoxelSet:
    surf = s.coords[s.surface_mask(NEAR_THRESHOLD)]
    if len(surf) == 0:
        return VoxelSet()
    shifted = (surf[:, None, :] + _NEIGHBORS[None, :, :]).reshape(-1, 3)
    return VoxelSet(keys=pack_keys(shifted))


def surface_voxels(scene: Scene, voxel_size: float, lo: Sequence[int], hi: Sequence[int],
                   origin: Sequence[int] = (0, 0, 0), slab: int = 16) -> np.ndarray:
    """
    Воксели [lo, hi) с |sceneSDF| < voxel_size в центре (c + origin) * voxel_size.

    Returns:
        Координаты (N, 3) в системе индексов с началом origin
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    origin = np.asarray(origin, dtype=np.int64)
    ys = np.arange(lo[1], hi[1])
    zs = np.arange(lo[2], hi[2])
    found = []
    for x0 in range(int(lo[0]), int(hi[0]), slab):
        xs = np.arange(x0, min(x0 + slab, int(hi[0])))
        g = np.stack(np.meshgrid(xs, ys, zs, indexing='ij'), axis=-1).reshape(-1, 3)
        sdf = scene.sdf((g + origin) * voxel_size)
        found.append(g[np.abs(sdf) < voxel_size])
    return np.concatenate(found) if found else np.zeros((0, 3), dtype=np.int64)


def completion_recall(pred: SparseTSDF, scene: Scene, input_scan: SparseTSDF,
                      origin: Sequence[int] = (0, 0, 0),
                      box: Optional[CropSpec] = None) -> float:
    """
    Доля поверхностных вокселей сцены, отсутствующих во входе, но
    присутствующих в предсказании (в пределах 1 вокселя).

    Args:
        pred: Предсказанный TSDF
        scene: Синтетическая сцена с точной геометрией
        input_scan: Входной TSDF
        origin: Сдвиг индексов (для кропов: начало кропа)
        box: Область оценки; по умолчанию заявленная область сцены

    Returns:
        Полнота в [0, 1]; 0, если вся поверхность уже есть во входе
    """
    vs = input_scan.voxel_size
    origin = np.asarray(origin, dtype=np.int64)
    if box is None:
        lo = np.floor(scene.extent_min / vs).astype(np.int64) - origin
        hi = np.ceil(scene.extent_max / vs).astype(np.int64) + 1 - origin
    else:
        lo, hi = box.lo, box.hi
    gt = surface_voxels(scene, vs, lo, hi, origin)
    if len(gt) == 0:
        return 0.0
    missing = gt[~_dilated_surface(input_scan).contains(gt)]
    if len(missing) == 0:
        logger.info("Вся поверхность уже присутствует во входе")
        return 0.0
    recovered = _dilated_surface(pred).contains(missing)
    recall = float(recovered.mean())
    logger.info(f"Полнота завершения: {recall:.4f} ({int(recovered.sum())}/{len(missing)})")
    return recall
