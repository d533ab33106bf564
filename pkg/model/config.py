# -*- coding: utf-8 -*-
"""config.py

Гиперпараметры архитектуры.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict

from errors import ConfigurationError
from grid.voxels import DEFAULT_TRUNCATION

INPUT_REPRS = ('tsdf', 'occupancy', 'pointcloud')
OUTPUT_REPRS = ('tsdf', 'occupancy')


@dataclass(slots=True)
class ModelConfig:
    """
    Параметры модели.

    Attributes:
        levels: Число уровней иерархии L (уровни 0..L-1 на шагах 2^L..2)
        base_width: Базовая ширина каналов; ширина стадии энкодера i = base_width * 2^(i-1)
        input_repr: Представление входа: tsdf, occupancy или pointcloud
        output_repr: Представление выхода: tsdf или occupancy
        truncation: Усечение tau в вокселях
    """

    levels: int = 3
    base_width: int = 16
    input_repr: str = 'tsdf'
    output_repr: str = 'tsdf'
    truncation: float = DEFAULT_TRUNCATION

    def __post_init__(self) -> None:
        if int(self.levels) != self.levels or self.levels < 1:
            raise ConfigurationError(f"levels должно быть целым >= 1, получено {self.levels}")
        if int(self.base_width) != self.base_width or self.base_width < 1:
            raise ConfigurationError(f"base_width должно быть целым >= 1, получено {self.base_width}")
        if self.input_repr not in INPUT_REPRS:
            raise ConfigurationError(f"Неизвестное представление входа '{self.input_repr}'")
        if self.output_repr not in OUTPUT_REPRS:
            raise ConfigurationError(f"Неизвестное представление выхода '{self.output_repr}'")
        if self.truncation <= 0:
            raise ConfigurationError("truncation должно быть положительным")
        self.levels = int(self.levels)
        self.base_width = int(self.base_width)
        self.truncation = float(self.truncation)

    def width(self, stride_exp: int) -> int:
        """Ширина признаков на шаге 2^stride_exp (на шаге 1 равна base_width)."""
        return self.base_width * 2 ** max(stride_exp - 1, 0)

    @property
    def predicts_sdf(self) -> bool:
        return self.output_repr == 'tsdf'

    def to_header(self) -> Dict[str, str]:
        return {k: str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_header(cls, header: Dict[str, str]) -> 'ModelConfig':
        try:
            return cls(levels=int(header['levels']), base_width=int(header['base_width']),
                       input_repr=header['input_repr'], output_repr=header['output_repr'],
                       truncation=float(header['truncation']))
        except KeyError as e:
            raise ConfigurationError(f"В заголовке нет ключа {e}") from None
