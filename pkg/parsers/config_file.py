# -*- coding: utf-8 -*-
"""config_file.py

Текстовый конфиг обучения: строки ``key=value``, пустые строки и
комментарии ``#`` игнорируются. Ключи модели (levels, base_width,
input_repr, output_repr, truncation) и обучения разбираются в
ModelConfig и TrainConfig.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Callable, Dict, Tuple, Union

from errors import ConfigurationError
from model.config import ModelConfig
from training.config import TrainConfig

logger = logging.getLogger('SGNN.Parsers')


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ('1', 'true', 'yes', 'on'):
        return True
    if low in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"не булево значение '{text}'")


def _parse_dims(text: str) -> Tuple[int, int, int]:
    parts = [p for p in re.split(r'[,x\s]+', text.strip()) if p]
    if len(parts) != 3:
        raise ValueError(f"ожидалось три размера, получено '{text}'")
    return tuple(int(p) for p in parts)


class ConfigFileParser:
    """Парсер конфигурации обучения."""

    _LINE_RE = re.compile(r'^\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>[^#]*?)\s*(?:#.*)?$')
    _COMMENT_RE = re.compile(r'^\s*(?:#.*)?$')

    MODEL_KEYS: Dict[str, Callable[[str], object]] = {
        'levels': int, 'base_width': int, 'input_repr': str, 'output_repr': str,
        'truncation': float,
    }
    TRAIN_KEYS: Dict[str, Callable[[str], object]] = {
        'lr': float, 'batch_size': int, 'n_level': int, 'iterations': int, 'seed': int,
        'w_occ': float, 'w_sdf': float, 'w_final': float, 'use_mask': _parse_bool,
        'checkpoint_every': int, 'crop': _parse_dims, 'min_surface_voxels': int,
        'prefetch': int, 'deterministic': _parse_bool,
    }

    def parse_values(self, text: str, source: str = '<text>') -> Dict[str, object]:
        """
        Разбирает текст в словарь типизированных значений.

        Raises:
            ConfigurationError: при неизвестном ключе, повторе или неверном значении
        """
        values: Dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if self._COMMENT_RE.match(line):
                continue
            m = self._LINE_RE.match(line)
            if not m:
                raise ConfigurationError(f"{source}:{lineno}: ожидалось key=value, получено '{line.strip()}'")
            key, raw = m.group('key'), m.group('value')
            conv = self.MODEL_KEYS.get(key) or self.TRAIN_KEYS.get(key)
            if conv is None:
                raise ConfigurationError(f"{source}:{lineno}: неизвестный ключ '{key}'")
            if key in values:
                raise ConfigurationError(f"{source}:{lineno}: ключ '{key}' задан повторно")
            try:
                values[key] = conv(raw)
            except ValueError as e:
                raise ConfigurationError(f"{source}:{lineno}: {key}: {e}") from None
        return values

    def parse_text(self, text: str, source: str = '<text>') -> Tuple[TrainConfig, ModelConfig]:
        values = self.parse_values(text, source)
        model_cfg = ModelConfig(**{k: v for k, v in values.items() if k in self.MODEL_KEYS})
        train_cfg = TrainConfig(**{k: v for k, v in values.items() if k in self.TRAIN_KEYS})
        logger.debug(f"Конфиг {source}: {values}")
        return train_cfg, model_cfg

    def parse_file(self, file_path: Union[str, Path]) -> Tuple[TrainConfig, ModelConfig]:
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Файл не найден: {path}")
        return self.parse_text(path.read_text(encoding='utf-8'), str(path))

    @staticmethod
    def to_text(train_cfg: TrainConfig, model_cfg: ModelConfig) -> str:
        lines = [f"{k}={v}" for k, v in model_cfg.to_header().items()]
        lines += [f"{k}={v}" for k, v in train_cfg.to_header().items()]
        return '\n'.join(lines) + '\n'
