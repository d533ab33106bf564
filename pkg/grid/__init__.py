"""Разреженные и плотные воксельные сетки, TSDF и операции над ними."""

from grid.keys import pack_keys, unpack_keys
from grid.voxels import (
    VoxelCoord, TSDFEntry, SparseTSDF, DenseGrid, CropSpec, VoxelSet,
    densify, sparsify, crop, crop_voxels, downsample_target,
)

__all__ = [
    'pack_keys', 'unpack_keys',
    'VoxelCoord', 'TSDFEntry', 'SparseTSDF', 'DenseGrid', 'CropSpec', 'VoxelSet',
    'densify', 'sparsify', 'crop', 'crop_voxels', 'downsample_target',
]
