#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Контейнеры воксельных сеток для SGNN.

SparseTSDF хранит усечённое знаковое расстояние только в посещённых вокселях;
DenseGrid используется для плотного «бутылочного горлышка» сети и для эталонных
проверок. Расстояния всегда в единицах вокселя, знак положительный в свободном
пространстве перед поверхностью.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, NamedTuple, Optional, Tuple

import numpy as np

from grid.keys import pack_keys, unpack_keys, lookup

logger = logging.getLogger('SGNN.Grid')

DEFAULT_VOXEL_SIZE = 0.02
DEFAULT_TRUNCATION = 3.0
DEFAULT_CROP_DIMS = (64, 64, 128)

# допуск на сравнение |d| <= tau для значений, прошедших через float32
_TAU_EPS = 1e-5


@dataclass(frozen=True, slots=True, order=True)
class VoxelCoord:
    """Целочисленная координата вокселя; batch = индекс образца в минибатче."""

    x: int
    y: int
    z: int
    batch: int = 0

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.x, self.y, self.z)

    def shifted(self, dx: int, dy: int, dz: int) -> 'VoxelCoord':
        return VoxelCoord(self.x + dx, self.y + dy, self.z + dz, self.batch)


class TSDFEntry(NamedTuple):
    d: float
    w: float
    observed: bool


def _as_coords(coords) -> np.ndarray:
    arr = np.asarray(coords, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != 3:
        raise ValueError(f"Ожидались координаты (N, 3), получено {arr.shape}")
    return arr


class SparseTSDF:
    """
    Разреженный TSDF: ассоциативный индекс координата -> (d, w, observed).

    Записи хранятся в массивах numpy, отсортированных по ключу координаты,
    поэтому итерация и сериализация детерминированы. После создания объект
    не меняется; все операции возвращают новый экземпляр.

    Attributes:
        voxel_size: Размер вокселя в метрах
        truncation: Усечение tau в единицах вокселя
    """
    __slots__ = ('voxel_size', 'truncation', '_keys', '_coords', '_d', '_w', '_observed')

    def __init__(self, coords=None, d=None, w=None, observed=None,
                 voxel_size: float = DEFAULT_VOXEL_SIZE,
                 truncation: float = DEFAULT_TRUNCATION,
                 validate: bool = True):
        if voxel_size <= 0 or truncation <= 0:
            raise ValueError("voxel_size и truncation должны быть положительными")
        self.voxel_size = float(voxel_size)
        self.truncation = float(truncation)

        coords = _as_coords(coords if coords is not None else [])
        n = len(coords)
        d = np.zeros(n) if d is None else np.asarray(d, dtype=np.float64).reshape(-1)
        w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64).reshape(-1)
        observed = (np.ones(n, dtype=bool) if observed is None
                    else np.asarray(observed, dtype=bool).reshape(-1))
        if not (len(d) == len(w) == len(observed) == n):
            raise ValueError("Длины массивов координат и значений не совпадают")

        keys = pack_keys(coords)
        order = np.argsort(keys, kind='stable')
        keys = keys[order]
        if n > 1 and np.any(keys[1:] == keys[:-1]):
            raise ValueError("Координаты записей SparseTSDF должны быть уникальны")

        self._keys = keys
        self._coords = coords[order]
        self._d = d[order]
        self._w = w[order]
        self._observed = observed[order]
        for arr in (self._keys, self._coords, self._d, self._w, self._observed):
            arr.setflags(write=False)

        if validate:
            self._check_invariants()

    def _check_invariants(self) -> None:
        tau = self.truncation
        if len(self._d) == 0:
            return
        if np.any(np.abs(self._d) > tau + _TAU_EPS):
            raise ValueError(f"|d| превышает усечение {tau}")
        if np.any(self._w <= 0):
            raise ValueError("Вес каждой записи должен быть положительным")
        if np.any(self._observed & (self._d <= -tau)):
            raise ValueError("Наблюдаемые записи должны иметь d > -tau")

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def empty(cls, voxel_size: float = DEFAULT_VOXEL_SIZE,
              truncation: float = DEFAULT_TRUNCATION) -> 'SparseTSDF':
        return cls(voxel_size=voxel_size, truncation=truncation)

    @classmethod
    def from_entries(cls, entries: Dict[Tuple[int, int, int], TSDFEntry],
                     voxel_size: float = DEFAULT_VOXEL_SIZE,
                     truncation: float = DEFAULT_TRUNCATION) -> 'SparseTSDF':
        """Строит TSDF из словаря {(x, y, z): TSDFEntry}."""
        items = list(entries.items())
        coords = [c.as_tuple() if isinstance(c, VoxelCoord) else c for c, _ in items]
        return cls(coords,
                   [e.d for _, e in items], [e.w for _, e in items],
                   [e.observed for _, e in items],
                   voxel_size=voxel_size, truncation=truncation)

    def _derive(self, coords, d, w, observed, validate: bool = False) -> 'SparseTSDF':
        return SparseTSDF(coords, d, w, observed, self.voxel_size, self.truncation,
                          validate=validate)

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, coord) -> bool:
        _, found = lookup(self._keys, pack_keys(_as_coords(_coord_tuple(coord))))
        return bool(found[0])

    def __iter__(self) -> Iterator[Tuple[Tuple[int, int, int], TSDFEntry]]:
        return self.items()

    def items(self) -> Iterator[Tuple[Tuple[int, int, int], TSDFEntry]]:
        for i in range(len(self._keys)):
            c = self._coords[i]
            yield ((int(c[0]), int(c[1]), int(c[2])),
                   TSDFEntry(float(self._d[i]), float(self._w[i]), bool(self._observed[i])))

    def get(self, coord) -> Optional[TSDFEntry]:
        idx, found = lookup(self._keys, pack_keys(_as_coords(_coord_tuple(coord))))
        if not found[0]:
            return None
        i = idx[0]
        return TSDFEntry(float(self._d[i]), float(self._w[i]), bool(self._observed[i]))

    def lookup(self, coords: np.ndarray):
        """Векторный поиск: возвращает (индексы, найдено) для массива координат (N, 3)."""
        return lookup(self._keys, pack_keys(_as_coords(coords)))

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def d(self) -> np.ndarray:
        return self._d

    @property
    def w(self) -> np.ndarray:
        return self._w

    @property
    def observed(self) -> np.ndarray:
        return self._observed

    def bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Минимальная и максимальная (включительно) координаты записей."""
        if len(self) == 0:
            return None
        return self._coords.min(axis=0), self._coords.max(axis=0)

    def surface_mask(self, band: float = 1.0) -> np.ndarray:
        """Булева маска записей с |d| <= band (воксели у поверхности)."""
        return np.abs(self._d) <= band

    def select(self, mask: np.ndarray) -> 'SparseTSDF':
        mask = np.asarray(mask, dtype=bool)
        return self._derive(self._coords[mask], self._d[mask], self._w[mask],
                            self._observed[mask])

    def translated(self, offset) -> 'SparseTSDF':
        offset = np.asarray(offset, dtype=np.int64).reshape(1, 3)
        return self._derive(self._coords + offset, self._d, self._w, self._observed)

    def same_entries(self, other: 'SparseTSDF', atol: float = 0.0) -> bool:
        """Совпадают ли множества координат и значения записей."""
        if len(self) != len(other) or not np.array_equal(self._keys, other._keys):
            return False
        return (np.allclose(self._d, other._d, atol=atol, rtol=0)
                and np.allclose(self._w, other._w, atol=atol, rtol=0)
                and np.array_equal(self._observed, other._observed))

    def __repr__(self) -> str:
        return (f"SparseTSDF(entries={len(self)}, voxel_size={self.voxel_size}, "
                f"truncation={self.truncation})")


def _coord_tuple(coord) -> Tuple[int, int, int]:
    if isinstance(coord, VoxelCoord):
        return coord.as_tuple()
    return tuple(int(v) for v in coord)


class VoxelSet:
    """
    Множество координат вокселей (маска наблюдаемой области и т.п.).

    Хранит отсортированные уникальные ключи; поддерживает операции множеств.
    """
    __slots__ = ('_keys',)

    def __init__(self, coords=None, *, keys: Optional[np.ndarray] = None):
        if keys is None:
            keys = pack_keys(_as_coords(coords if coords is not None else []))
        keys = np.unique(np.asarray(keys, dtype=np.int64))
        keys.setflags(write=False)
        self._keys = keys

    @classmethod
    def observed_of(cls, tsdf: SparseTSDF) -> 'VoxelSet':
        """Маска потерь: записи с d > -tau."""
        return cls(keys=tsdf.keys[tsdf.d > -tsdf.truncation])

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def coords(self) -> np.ndarray:
        return unpack_keys(self._keys)[:, 1:]

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, coord) -> bool:
        return bool(self.contains(np.asarray([_coord_tuple(coord)]))[0])

    def contains(self, coords: np.ndarray) -> np.ndarray:
        _, found = lookup(self._keys, pack_keys(_as_coords(coords)))
        return found

    def __and__(self, other: 'VoxelSet') -> 'VoxelSet':
        return VoxelSet(keys=np.intersect1d(self._keys, other._keys, assume_unique=True))

    def __or__(self, other: 'VoxelSet') -> 'VoxelSet':
        return VoxelSet(keys=np.union1d(self._keys, other._keys))

    def __sub__(self, other: 'VoxelSet') -> 'VoxelSet':
        return VoxelSet(keys=np.setdiff1d(self._keys, other._keys, assume_unique=True))

    def __eq__(self, other) -> bool:
        return isinstance(other, VoxelSet) and np.array_equal(self._keys, other._keys)

    def __hash__(self):
        return hash(self._keys.tobytes())

    def __repr__(self) -> str:
        return f"VoxelSet(size={len(self)})"


@dataclass(slots=True)
class CropSpec:
    """Прямоугольная область сетки: начало и размеры в вокселях."""

    origin: VoxelCoord = field(default_factory=lambda: VoxelCoord(0, 0, 0))
    dims: Tuple[int, int, int] = DEFAULT_CROP_DIMS

    def __post_init__(self) -> None:
        if not isinstance(self.origin, VoxelCoord):
            self.origin = VoxelCoord(*[int(v) for v in self.origin])
        self.dims = tuple(int(v) for v in self.dims)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"Размеры кропа должны быть положительными: {self.dims}")

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.origin.as_tuple(), dtype=np.int64)

    @property
    def hi(self) -> np.ndarray:
        """Граница области (исключительно)."""
        return self.lo + np.array(self.dims, dtype=np.int64)

    def contains(self, coords: np.ndarray) -> np.ndarray:
        coords = _as_coords(coords)
        return np.all((coords >= self.lo) & (coords < self.hi), axis=1)

    @classmethod
    def covering(cls, tsdf: SparseTSDF, pad: int = 0) -> 'CropSpec':
        """Минимальный бокс, содержащий все записи (с отступом pad)."""
        b = tsdf.bounds()
        if b is None:
            return cls(VoxelCoord(0, 0, 0), (1, 1, 1))
        lo, hi = b
        lo = lo - pad
        return cls(VoxelCoord(*[int(v) for v in lo]),
                   tuple(int(v) for v in (hi + pad - lo + 1)))

    @classmethod
    def parse(cls, text: str) -> 'CropSpec':
        """Разбирает строку вида 'x,y,z,dx,dy,dz'."""
        parts = [p.strip() for p in text.split(',')]
        if len(parts) != 6:
            raise ValueError(f"Ожидалось 6 чисел через запятую: '{text}'")
        vals = [int(p) for p in parts]
        return cls(VoxelCoord(*vals[:3]), tuple(vals[3:]))


@dataclass(slots=True)
class DenseGrid:
    """
    Плотная сетка значений.

    values имеет форму (dx, dy, dz, channels); flat() отдаёт фиксированную
    раскладку с самым быстрым x.
    """

    origin: VoxelCoord
    dims: Tuple[int, int, int]
    voxel_size: float
    channels: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.dims = tuple(int(v) for v in self.dims)
        if min(self.dims) < 1 or self.channels < 1:
            raise ValueError("Размеры и число каналов должны быть положительными")
        expected = (*self.dims, self.channels)
        if self.values.size != int(np.prod(expected)):
            raise ValueError(f"Ожидалось {int(np.prod(expected))} значений, "
                             f"получено {self.values.size}")
        self.values = self.values.reshape(expected)

    def flat(self) -> np.ndarray:
        # порядок (z, y, x, c): x меняется быстрее всех пространственных осей
        return np.ascontiguousarray(self.values.transpose(2, 1, 0, 3)).reshape(-1)

    def at(self, coord) -> np.ndarray:
        x, y, z = _coord_tuple(coord)
        o = self.origin
        return self.values[x - o.x, y - o.y, z - o.z]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def densify(s: SparseTSDF, spec: CropSpec, fill: float) -> DenseGrid:
    """
    Переносит записи TSDF в плотную сетку области spec.

    Args:
        s: Разреженный TSDF
        spec: Область сетки
        fill: Значение для ячеек без записей

    Returns:
        DenseGrid с одним каналом; записи вне области отбрасываются
    """
    values = np.full((*spec.dims, 1), fill, dtype=np.float64)
    inside = spec.contains(s.coords)
    rel = s.coords[inside] - spec.lo
    values[rel[:, 0], rel[:, 1], rel[:, 2], 0] = s.d[inside]
    return DenseGrid(spec.origin, spec.dims, s.voxel_size, 1, values)


def sparsify(g: DenseGrid, truncation: float,
             voxel_size: Optional[float] = None) -> SparseTSDF:
    """
    Собирает записи плотной сетки с |g(c)| < truncation.

    Каждая запись получает w = 1 и observed = True.
    """
    if g.channels != 1:
        raise ValueError(f"sparsify ожидает один канал, получено {g.channels}")
    vals = g.values[..., 0]
    idx = np.argwhere(np.abs(vals) < truncation)
    d = vals[idx[:, 0], idx[:, 1], idx[:, 2]] if len(idx) else np.zeros(0)
    coords = idx + np.array(g.origin.as_tuple(), dtype=np.int64)
    return SparseTSDF(coords, d, np.ones(len(idx)), np.ones(len(idx), dtype=bool),
                      voxel_size=voxel_size or g.voxel_size, truncation=truncation)


def crop(s: SparseTSDF, spec: CropSpec) -> SparseTSDF:
    """Оставляет записи внутри области и переводит их в координаты относительно spec.origin."""
    inside = spec.contains(s.coords)
    return s._derive(s.coords[inside] - spec.lo, s.d[inside], s.w[inside],
                     s.observed[inside])


def crop_voxels(v: VoxelSet, spec: CropSpec) -> VoxelSet:
    """То же, что crop, для множества координат."""
    coords = v.coords
    inside = spec.contains(coords)
    return VoxelSet(coords[inside] - spec.lo)


def downsample_target(s: SparseTSDF, factor: int) -> SparseTSDF:
    """
    Огрубляет TSDF в factor раз (родитель = floor(child / factor)).

    d родителя берётся у потомка с минимальным |d| (при равенстве у потомка с
    наименьшей координатой), observed = OR по потомкам, w = сумма весов.
    Если выбранный потомок лежит за поверхностью (d <= -tau), родитель
    считается ненаблюдаемым, даже когда наблюдаем другой потомок.
    Значения d остаются в единицах исходного вокселя.
    """
    if factor < 2 or factor & (factor - 1):
        raise ValueError(f"factor должен быть степенью двойки >= 2, получено {factor}")
    if len(s) == 0:
        return SparseTSDF.empty(s.voxel_size * factor, s.truncation)

    parents = np.floor_divide(s.coords, factor)
    parent_keys = pack_keys(parents)
    # записи уже отсортированы по ключу потомка -> индекс позиции задаёт tie-break
    order = np.lexsort((np.arange(len(s)), np.abs(s.d), parent_keys))
    pk_sorted = parent_keys[order]
    starts = np.flatnonzero(np.r_[True, pk_sorted[1:] != pk_sorted[:-1]])
    chosen = order[starts]

    d = s.d[chosen]
    obs = np.maximum.reduceat(s.observed[order].astype(np.int8), starts).astype(bool)
    obs &= d > -s.truncation
    w = np.add.reduceat(s.w[order], starts)
    return SparseTSDF(parents[chosen], d, w, obs,
                      voxel_size=s.voxel_size * factor, truncation=s.truncation)
