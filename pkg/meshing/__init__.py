# -*- coding: utf-8 -*-
"""Извлечение сетки из TSDF."""

from meshing.marching import TriangleMesh, marching_cubes

__all__ = ['TriangleMesh', 'marching_cubes']
