# -*- coding: utf-8 -*-
"""ply_file.py

Текстовый PLY (ascii 1.0): вершины x y z и грани vertex_indices.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Union

import numpy as np

from errors import FormatError
from meshing.marching import TriangleMesh

logger = logging.getLogger('SGNN.Parsers')


class PlyParser:
    """
    Парсер ascii PLY с треугольными гранями.
    """

    # Регулярные выражения для строк заголовка
    _FORMAT_RE = re.compile(r'^format\s+ascii\s+1\.0$')
    _ELEMENT_RE = re.compile(r'^element\s+(?P<name>\w+)\s+(?P<count>\d+)$')
    _PROPERTY_RE = re.compile(r'^property\s+(?P<spec>.+)$')

    def parse_text(self, text: str, source: str = '<text>') -> TriangleMesh:
        """
        Разбирает текст PLY.

        Raises:
            FormatError: при неверном заголовке, числе строк или не-треугольной грани
        """
        lines = text.splitlines()
        if not lines or lines[0].strip() != 'ply':
            raise FormatError(f"{source}: не файл PLY")
        counts = {}
        pos = 1
        seen_format = False
        while pos < len(lines):
            line = lines[pos].strip()
            pos += 1
            if line == 'end_header':
                break
            if self._FORMAT_RE.match(line):
                seen_format = True
                continue
            m = self._ELEMENT_RE.match(line)
            if m:
                counts[m.group('name')] = int(m.group('count'))
                continue
            if self._PROPERTY_RE.match(line) or line.startswith('comment'):
                continue
            raise FormatError(f"{source}: неизвестная строка заголовка '{line}'")
        else:
            raise FormatError(f"{source}: нет end_header")
        if not seen_format:
            raise FormatError(f"{source}: поддерживается только format ascii 1.0")

        n_vert = counts.get('vertex', 0)
        n_face = counts.get('face', 0)
        body = [l for l in lines[pos:] if l.strip()]
        if len(body) != n_vert + n_face:
            raise FormatError(f"{source}: ожидалось {n_vert + n_face} строк данных, "
                              f"получено {len(body)}")
        try:
            vertices = np.array([[float(v) for v in l.split()[:3]] for l in body[:n_vert]],
                                dtype=np.float64).reshape(-1, 3)
            faces = []
            for l in body[n_vert:]:
                parts = [int(v) for v in l.split()]
                if parts[0] != 3 or len(parts) != 4:
                    raise FormatError(f"{source}: поддерживаются только треугольники")
                faces.append(parts[1:])
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"{source}: ошибка разбора данных: {e}") from None
        return TriangleMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))

    def parse_file(self, file_path: Union[str, Path]) -> TriangleMesh:
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Файл не найден: {path}")
        return self.parse_text(path.read_text(encoding='ascii'), str(path))


def mesh_to_text(mesh: TriangleMesh) -> str:
    header = ['ply', 'format ascii 1.0',
              f'element vertex {len(mesh.vertices)}',
              'property float x', 'property float y', 'property float z',
              f'element face {len(mesh.triangles)}',
              'property list uchar int vertex_indices', 'end_header']
    body = [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    body += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    return '\n'.join(header + body) + '\n'


def write_ply(path: Union[str, Path], mesh: TriangleMesh) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mesh_to_text(mesh), encoding='ascii')
    logger.info(f"Сетка записана: {path} ({len(mesh)} треугольников)")


def read_ply(path: Union[str, Path]) -> TriangleMesh:
    return PlyParser().parse_file(path)
