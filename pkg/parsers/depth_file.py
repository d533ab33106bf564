# -*- coding: utf-8 -*-
"""depth_file.py

Бинарный формат кадра глубины (little-endian)::

    magic  "SGNN-DEP1"
    u32    width, height
    f32    fx, fy, cx, cy
    16 x f32 поза (построчно, камера -> мир)
    width*height x f32 глубины (построчно), 0 = невалидно

Конвертер реальных датасетов в этот формат - точка расширения: достаточно
записать кадры через write_depth_frame.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from errors import FormatError
from scenes.camera import CameraIntrinsics, DepthFrame

logger = logging.getLogger('SGNN.Parsers')

DEPTH_MAGIC = b'SGNN-DEP1'

_HEADER = np.dtype([('width', '<u4'), ('height', '<u4'),
                    ('fx', '<f4'), ('fy', '<f4'), ('cx', '<f4'), ('cy', '<f4'),
                    ('pose', '<f4', (16,))])


def write_depth_frame(path: Union[str, Path], frame: DepthFrame) -> None:
    k = frame.intrinsics
    header = np.zeros(1, dtype=_HEADER)
    header['width'], header['height'] = k.width, k.height
    header['fx'], header['fy'], header['cx'], header['cy'] = k.fx, k.fy, k.cx, k.cy
    header['pose'] = frame.pose.reshape(-1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(DEPTH_MAGIC + header.tobytes()
                     + frame.depths.astype('<f4').tobytes())


def read_depth_frame(path: Union[str, Path]) -> DepthFrame:
    """
    Читает кадр глубины.

    Поворот позы после float32 переортонормируется (SVD), чтобы кадр прошёл
    проверку жёсткости с допуском 1e-6.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")
    data = path.read_bytes()
    if not data.startswith(DEPTH_MAGIC):
        raise FormatError(f"{path}: не файл кадра глубины")
    offset = len(DEPTH_MAGIC)
    if len(data) < offset + _HEADER.itemsize:
        raise FormatError(f"{path}: файл обрезан (заголовок)")
    h = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
    offset += _HEADER.itemsize
    width, height = int(h['width']), int(h['height'])
    if len(data) != offset + 4 * width * height:
        raise FormatError(f"{path}: размер растра не совпадает с заголовком")
    depths = np.frombuffer(data, dtype='<f4', count=width * height, offset=offset)
    intr = CameraIntrinsics(float(h['fx']), float(h['fy']), float(h['cx']), float(h['cy']),
                            width, height)
    pose = h['pose'].astype(np.float64).reshape(4, 4)
    u, _, vt = np.linalg.svd(pose[:3, :3])
    pose[:3, :3] = u @ vt
    pose[3] = (0.0, 0.0, 0.0, 1.0)
    return DepthFrame(depths.astype(np.float64).reshape(height, width), intr, pose)


def list_frame_files(directory: Union[str, Path]) -> List[Path]:
    """Файлы кадров каталога в лексикографическом порядке."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Каталог кадров не найден: {directory}")
    return sorted(directory.glob('*.dep'))


def read_frames_dir(directory: Union[str, Path]) -> List[DepthFrame]:
    files = list_frame_files(directory)
    frames = [read_depth_frame(f) for f in files]
    logger.info(f"Загружено {len(frames)} кадров из {directory}")
    return frames
