# -*- coding: utf-8 -*-
"""tsdf_file.py

Бинарный формат разреженного TSDF (little-endian)::

    magic  "SGNN-TSDF1"
    f32    voxel_size
    f32    truncation
    u64    count
    count x (i32 x, i32 y, i32 z, f32 d, f32 w, u8 observed)

Записи пишутся в порядке ключей координат, поэтому файл байт-в-байт
воспроизводим. Маска наблюдаемой области хранится в том же формате: записи =
координаты маски, d = 0, w = 1, observed = 1.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np

from errors import FormatError
from grid.voxels import SparseTSDF, VoxelSet

logger = logging.getLogger('SGNN.Parsers')

TSDF_MAGIC = b'SGNN-TSDF1'

_HEADER = np.dtype([('voxel_size', '<f4'), ('truncation', '<f4'), ('count', '<u8')])
_RECORD = np.dtype([('x', '<i4'), ('y', '<i4'), ('z', '<i4'),
                    ('d', '<f4'), ('w', '<f4'), ('observed', 'u1')])


def _d_to_f32(tsdf: SparseTSDF) -> np.ndarray:
    """d в f32; записи с d > -tau остаются строго выше -tau после округления."""
    d32 = tsdf.d.astype(np.float32)
    tau32 = np.float32(tsdf.truncation)
    rounded_down = (tsdf.d > -tsdf.truncation) & (d32 <= -tau32)
    d32[rounded_down] = np.nextafter(-tau32, np.float32(0))
    return d32


def tsdf_to_bytes(tsdf: SparseTSDF) -> bytes:
    header = np.zeros(1, dtype=_HEADER)
    header['voxel_size'] = tsdf.voxel_size
    header['truncation'] = tsdf.truncation
    header['count'] = len(tsdf)
    records = np.zeros(len(tsdf), dtype=_RECORD)
    if len(tsdf):
        records['x'], records['y'], records['z'] = tsdf.coords.T
        records['d'] = _d_to_f32(tsdf)
        records['w'] = tsdf.w
        records['observed'] = tsdf.observed
    return TSDF_MAGIC + header.tobytes() + records.tobytes()


def tsdf_from_bytes(data: bytes, source: str = '<bytes>') -> SparseTSDF:
    if not data.startswith(TSDF_MAGIC):
        raise FormatError(f"{source}: не TSDF-файл (неверная сигнатура)")
    offset = len(TSDF_MAGIC)
    if len(data) < offset + _HEADER.itemsize:
        raise FormatError(f"{source}: файл обрезан (заголовок)")
    header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
    offset += _HEADER.itemsize
    count = int(header['count'])
    if len(data) != offset + count * _RECORD.itemsize:
        raise FormatError(f"{source}: ожидалось {count} записей, размер файла не совпадает")
    rec = np.frombuffer(data, dtype=_RECORD, count=count, offset=offset)
    coords = np.stack([rec['x'], rec['y'], rec['z']], axis=1).astype(np.int64)
    tsdf = SparseTSDF(coords, rec['d'].astype(np.float64), rec['w'].astype(np.float64),
                      rec['observed'].astype(bool),
                      voxel_size=float(header['voxel_size']),
                      truncation=float(header['truncation']), validate=False)
    return tsdf


def write_tsdf(path: Union[str, Path], tsdf: SparseTSDF) -> None:
    """Сохраняет TSDF в файл."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(tsdf_to_bytes(tsdf))
    logger.debug(f"Записан TSDF {path}: {len(tsdf)} записей")


def read_tsdf(path: Union[str, Path]) -> SparseTSDF:
    """
    Загружает TSDF из файла.

    Raises:
        FileNotFoundError: если файла нет
        FormatError: если файл повреждён
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")
    return tsdf_from_bytes(path.read_bytes(), str(path))


def write_mask(path: Union[str, Path], mask: VoxelSet, voxel_size: float,
               truncation: float) -> None:
    coords = mask.coords
    n = len(coords)
    write_tsdf(path, SparseTSDF(coords, np.zeros(n), np.ones(n), np.ones(n, dtype=bool),
                                voxel_size=voxel_size, truncation=truncation))


def read_mask(path: Union[str, Path]) -> VoxelSet:
    return VoxelSet(read_tsdf(path).coords)
