# -*- coding: utf-8 -*-
"""scene_file.py

Текстовое описание сцены: один примитив на строку::

    # extent 0 0 0 4.2 3.7 2.6
    plane 0 0 1 0
    box 1.2 0.8 0.3 0.4 0.3 0.3
    sphere 2.0 2.0 0.25 0.25

box: центр и половины размеров; sphere: центр и радиус; plane: нормаль и
смещение (n·p >= offset - свободная сторона). Строка ``# extent`` задаёт
заявленную область сцены, остальные комментарии игнорируются.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import List, Union

import numpy as np

from errors import FormatError
from scenes.primitives import Box, Plane, Scene, Sphere

logger = logging.getLogger('SGNN.Parsers')

_FLOAT = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?'


class SceneFileParser:
    """Парсер и писатель текстового описания сцены."""

    _EXTENT_RE = re.compile(rf'^#\s*extent((?:\s+{_FLOAT}){{6}})\s*$')
    _PRIM_RE = re.compile(rf'^(?P<kind>box|sphere|plane)(?P<params>(?:\s+{_FLOAT})+)\s*$')
    _ARITY = {'box': 6, 'sphere': 4, 'plane': 4}

    def parse_text(self, text: str, source: str = '<text>') -> Scene:
        prims = []
        extent = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            m_ext = self._EXTENT_RE.match(line)
            if m_ext:
                extent = [float(v) for v in m_ext.group(1).split()]
                continue
            if line.startswith('#'):
                continue
            m = self._PRIM_RE.match(line)
            if not m:
                raise FormatError(f"{source}:{lineno}: не удалось разобрать строку '{line}'")
            kind = m.group('kind')
            params = [float(v) for v in m.group('params').split()]
            if len(params) != self._ARITY[kind]:
                raise FormatError(f"{source}:{lineno}: {kind} ожидает "
                                  f"{self._ARITY[kind]} параметров, получено {len(params)}")
            if kind == 'box':
                prims.append(Box(params[:3], params[3:]))
            elif kind == 'sphere':
                prims.append(Sphere(params[:3], params[3]))
            else:
                prims.append(Plane(params[:3], params[3]))
        if extent is None:
            return Scene(prims)
        return Scene(prims, np.array(extent[:3]), np.array(extent[3:]))

    def parse_file(self, file_path: Union[str, Path]) -> Scene:
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Файл не найден: {path}")
        return self.parse_text(path.read_text(encoding='utf-8'), str(path))

    @staticmethod
    def to_text(scene: Scene) -> str:
        lines: List[str] = ['# extent ' + ' '.join(
            repr(float(v)) for v in (*scene.extent_min, *scene.extent_max))]
        for prim in scene.primitives:
            lines.append(prim.kind + ' ' + ' '.join(repr(float(v)) for v in prim.params()))
        return '\n'.join(lines) + '\n'

    def write_file(self, file_path: Union[str, Path], scene: Scene) -> None:
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(scene), encoding='utf-8')
