# -*- coding: utf-8 -*-
"""checkpoint_file.py

Бинарный формат контрольной точки (little-endian)::

    magic  "SGNN-CKPT1"
    u32    длина заголовка, затем заголовок "key=value" построчно (utf-8)
    u32    число блоков параметров и буферов
           блок: u16 длина имени, имя, u8 ранг, ранг x u32 размеры, f32 значения
    u32    число блоков моментов Adam (имена "m:<параметр>", "v:<параметр>")
    u32    число счётчиков шагов: u16 длина имени, имя, u64 шаг
    u64    номер итерации
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from errors import FormatError

logger = logging.getLogger('SGNN.Parsers')

CKPT_MAGIC = b'SGNN-CKPT1'


@dataclass(slots=True)
class Checkpoint:
    """Содержимое контрольной точки."""

    header: Dict[str, str] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    moments: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)
    iteration: int = 0


def _name_bytes(name: str) -> bytes:
    raw = name.encode('utf-8')
    if len(raw) > 0xFFFF:
        raise ValueError(f"Слишком длинное имя блока: {name[:40]}...")
    return struct.pack('<H', len(raw)) + raw


def _block(name: str, value: np.ndarray) -> bytes:
    arr = np.asarray(value, dtype='<f4')
    return (_name_bytes(name) + struct.pack('<B', arr.ndim)
            + struct.pack(f'<{arr.ndim}I', *arr.shape) + arr.tobytes())


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    header = ''.join(f"{k}={v}\n" for k, v in ckpt.header.items()).encode('utf-8')
    parts = [CKPT_MAGIC, struct.pack('<I', len(header)), header,
             struct.pack('<I', len(ckpt.arrays))]
    parts += [_block(n, v) for n, v in ckpt.arrays.items()]
    parts.append(struct.pack('<I', len(ckpt.moments)))
    parts += [_block(n, v) for n, v in ckpt.moments.items()]
    parts.append(struct.pack('<I', len(ckpt.steps)))
    parts += [_name_bytes(n) + struct.pack('<Q', int(s)) for n, s in ckpt.steps.items()]
    parts.append(struct.pack('<Q', int(ckpt.iteration)))
    return b''.join(parts)


class _Reader:
    __slots__ = ('data', 'pos', 'source')

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.source}: файл обрезан")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (n,) = self.unpack('<H')
        return self.take(n).decode('utf-8')

    def block(self) -> Tuple[str, np.ndarray]:
        name = self.name()
        (rank,) = self.unpack('<B')
        shape = self.unpack(f'<{rank}I') if rank else ()
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(self.take(4 * count), dtype='<f4').astype(np.float32)
        return name, values.reshape(shape)


def checkpoint_from_bytes(data: bytes, source: str = '<bytes>') -> Checkpoint:
    if not data.startswith(CKPT_MAGIC):
        raise FormatError(f"{source}: не файл контрольной точки")
    r = _Reader(data, source)
    r.take(len(CKPT_MAGIC))
    (hlen,) = r.unpack('<I')
    header: Dict[str, str] = {}
    for line in r.take(hlen).decode('utf-8').splitlines():
        if '=' in line:
            key, value = line.split('=', 1)
            header[key] = value
    ckpt = Checkpoint(header=header)
    (n,) = r.unpack('<I')
    for _ in range(n):
        name, value = r.block()
        ckpt.arrays[name] = value
    (n,) = r.unpack('<I')
    for _ in range(n):
        name, value = r.block()
        ckpt.moments[name] = value
    (n,) = r.unpack('<I')
    for _ in range(n):
        name = r.name()
        (ckpt.steps[name],) = r.unpack('<Q')
    (ckpt.iteration,) = r.unpack('<Q')
    if r.pos != len(data):
        raise FormatError(f"{source}: лишние данные в конце файла")
    return ckpt


def write_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_to_bytes(ckpt))
    logger.info(f"Сохранена контрольная точка {path} (итерация {ckpt.iteration})")


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")
    return checkpoint_from_bytes(path.read_bytes(), str(path))
