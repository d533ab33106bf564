# -*- coding: utf-8 -*-
"""config.py

Параметры обучения.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Tuple

from errors import ConfigurationError
from grid.voxels import DEFAULT_CROP_DIMS


@dataclass(slots=True)
class TrainConfig:
    """
    Параметры цикла обучения.

    Attributes:
        lr: Скорость обучения Adam
        batch_size: Образцов в минибатче
        n_level: Итераций до включения следующего уровня иерархии
        iterations: Всего итераций
        seed: Зерно всех случайных выборок
        w_occ, w_sdf: Веса прокси-потерь занятости и TSDF на уровнях
        w_final: Вес потери финального TSDF
        use_mask: Считать потери только в наблюдаемой области цели
        checkpoint_every: Период сохранения контрольных точек (0 = только в конце)
        crop: Размеры случайного кропа
        min_surface_voxels: Минимум поверхностных вокселей входа в кропе
        prefetch: Сколько батчей готовить заранее в пуле потоков (0 = без пула)
        deterministic: Последовательная загрузка без пула независимо от prefetch
    """

    lr: float = 0.001
    batch_size: int = 8
    n_level: int = 2000
    iterations: int = 6000
    seed: int = 0
    w_occ: float = 1.0
    w_sdf: float = 1.0
    w_final: float = 1.0
    use_mask: bool = True
    checkpoint_every: int = 500
    crop: Tuple[int, int, int] = DEFAULT_CROP_DIMS
    min_surface_voxels: int = 100
    prefetch: int = 0
    deterministic: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigurationError(f"lr должно быть положительным, получено {self.lr}")
        for name in ('batch_size', 'n_level'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} должно быть >= 1")
        for name in ('iterations', 'checkpoint_every', 'min_surface_voxels', 'prefetch'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} не может быть отрицательным")
        for name in ('w_occ', 'w_sdf', 'w_final'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"Вес {name} не может быть отрицательным")
        self.crop = tuple(int(v) for v in self.crop)
        if len(self.crop) != 3 or min(self.crop) < 1:
            raise ConfigurationError(f"Размеры кропа должны быть положительными: {self.crop}")

    def active_levels(self, iteration: int, levels: int) -> int:
        """min(1 + floor(iteration / n_level), levels)."""
        if iteration < 0:
            raise ValueError("Номер итерации не может быть отрицательным")
        return min(1 + iteration // self.n_level, levels)

    def to_header(self) -> Dict[str, str]:
        out = {}
        for k, v in asdict(self).items():
            out[k] = ','.join(str(x) for x in v) if isinstance(v, tuple) else str(v)
        return out
