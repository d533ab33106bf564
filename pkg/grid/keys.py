# -*- coding: utf-8 -*-
"""keys.py

Упаковка целочисленных координат вокселей (batch, x, y, z) в ключи int64.

Порядок ключей совпадает с лексикографическим порядком (batch, x, y, z), поэтому
отсортированный массив ключей одновременно служит хеш-индексом (через
``np.searchsorted``) и фиксирует детерминированный порядок обхода.
"""
from __future__ import annotations

import numpy as np

_FIELD_BITS = 16
_OFFSET = 1 << (_FIELD_BITS - 1)
_FIELD_MASK = (1 << _FIELD_BITS) - 1
_MAX_BATCH = (1 << 15) - 1

COORD_MIN = -_OFFSET
COORD_MAX = _OFFSET - 1


def pack_keys(coords: np.ndarray) -> np.ndarray:
    """
    Упаковывает координаты в ключи.

    Args:
        coords: Массив (N, 3) с x, y, z или (N, 4) с batch, x, y, z

    Returns:
        Массив int64 длины N
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] not in (3, 4):
        raise ValueError(f"Ожидался массив (N, 3) или (N, 4), получено {coords.shape}")
    if coords.shape[1] == 3:
        batch = np.zeros(len(coords), dtype=np.int64)
        xyz = coords
    else:
        batch = coords[:, 0]
        xyz = coords[:, 1:]
    if len(coords) and (xyz.min() < COORD_MIN or xyz.max() > COORD_MAX):
        raise ValueError(f"Координаты вне диапазона [{COORD_MIN}, {COORD_MAX}]")
    if len(coords) and (batch.min() < 0 or batch.max() > _MAX_BATCH):
        raise ValueError(f"Индекс батча вне диапазона [0, {_MAX_BATCH}]")
    shifted = xyz + _OFFSET
    return ((batch << (3 * _FIELD_BITS))
            | (shifted[:, 0] << (2 * _FIELD_BITS))
            | (shifted[:, 1] << _FIELD_BITS)
            | shifted[:, 2])


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    """Обратная операция к pack_keys: возвращает массив (N, 4) (batch, x, y, z)."""
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((len(keys), 4), dtype=np.int64)
    out[:, 0] = keys >> (3 * _FIELD_BITS)
    out[:, 1] = ((keys >> (2 * _FIELD_BITS)) & _FIELD_MASK) - _OFFSET
    out[:, 2] = ((keys >> _FIELD_BITS) & _FIELD_MASK) - _OFFSET
    out[:, 3] = (keys & _FIELD_MASK) - _OFFSET
    return out


def lookup(sorted_keys: np.ndarray, query: np.ndarray):
    """
    Ищет ключи query в отсортированном массиве.

    Returns:
        Кортеж (индексы, найдено); для не найденных ключей индекс не определён
    """
    query = np.asarray(query, dtype=np.int64)
    if len(sorted_keys) == 0:
        return np.zeros(len(query), dtype=np.int64), np.zeros(len(query), dtype=bool)
    idx = np.searchsorted(sorted_keys, query)
    idx = np.minimum(idx, len(sorted_keys) - 1)
    found = sorted_keys[idx] == query
    return idx, found
