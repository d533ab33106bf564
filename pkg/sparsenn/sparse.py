# -*- coding: utf-8 -*-
"""sparse.py

Разреженные и плотные 3D-тензоры признаков и свёрточные операции над ними.

SparseTensor = множество координат (batch, x, y, z), отсортированных по
ключу, плюс матрица признаков (N, C). Свёртки строятся по «книге правил»
(rulebook): для каждого смещения ядра - пары индексов (вход, выход), так что
на одном смещении каждый выходной индекс встречается не более одного раза.
Книги правил кэшируются на множестве координат и переиспользуются слоями.
"""
from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ShapeError
from grid.keys import pack_keys, unpack_keys, lookup
from sparsenn.tensor import Tensor, make_result, get_default_dtype

OFFSETS_3 = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
OFFSETS_2 = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.int64)


class CoordSet:
    """
    Отсортированное множество координат (N, 4) с кэшем книг правил.

    Attributes:
        coords: Массив (N, 4): batch, x, y, z
        keys: Ключи координат (отсортированы)
    """
    __slots__ = ('coords', 'keys', 'cache')

    def __init__(self, coords: np.ndarray, keys: Optional[np.ndarray] = None,
                 assume_sorted: bool = False):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
        if keys is None:
            keys = pack_keys(coords)
        if not assume_sorted:
            order = np.argsort(keys, kind='stable')
            coords, keys = coords[order], keys[order]
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise ShapeError("Координаты разреженного тензора должны быть уникальны")
        self.coords = coords
        self.keys = keys
        self.cache: Dict[str, object] = {}

    @classmethod
    def from_keys(cls, keys: np.ndarray) -> 'CoordSet':
        keys = np.unique(np.asarray(keys, dtype=np.int64))
        return cls(unpack_keys(keys), keys, assume_sorted=True)

    def __len__(self) -> int:
        return len(self.keys)

    def index_of(self, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return lookup(self.keys, pack_keys(coords))

    @property
    def batch_size(self) -> int:
        return int(self.coords[:, 0].max()) + 1 if len(self) else 0


class SparseTensor:
    """Разреженный тензор: множество координат и признаки (N, C) в узле графа."""
    __slots__ = ('cset', 'features')

    def __init__(self, cset: CoordSet, features: Tensor):
        if features.data.ndim != 2 or features.data.shape[0] != len(cset):
            raise ShapeError(f"Признаки {features.data.shape} не соответствуют "
                             f"{len(cset)} координатам")
        self.cset = cset
        self.features = features

    @classmethod
    def from_arrays(cls, coords: np.ndarray, features: np.ndarray,
                    requires_grad: bool = False) -> 'SparseTensor':
        """Создаёт тензор, сортируя координаты и признаки по ключу."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
        feats = np.asarray(features, dtype=get_default_dtype()).reshape(len(coords), -1)
        keys = pack_keys(coords)
        order = np.argsort(keys, kind='stable')
        cset = CoordSet(coords[order], keys[order], assume_sorted=True)
        return cls(cset, Tensor(feats[order], requires_grad=requires_grad))

    @property
    def coords(self) -> np.ndarray:
        return self.cset.coords

    @property
    def channels(self) -> int:
        return self.features.data.shape[1]

    def __len__(self) -> int:
        return len(self.cset)

    def with_features(self, features: Tensor) -> 'SparseTensor':
        return SparseTensor(self.cset, features)

    def __repr__(self) -> str:
        return f"SparseTensor(n={len(self)}, channels={self.channels})"


class DenseTensor:
    """
    Плотный тензор (B, C, X, Y, Z) с привязкой к сетке.

    Attributes:
        values: Узел графа со значениями
        origin: Координата (x, y, z) ячейки [.., 0, 0, 0]
    """
    __slots__ = ('values', 'origin')

    def __init__(self, values: Tensor, origin=(0, 0, 0)):
        if values.data.ndim != 5:
            raise ShapeError(f"Плотный тензор должен быть 5-мерным, получено {values.data.shape}")
        self.values = values
        self.origin = np.asarray(origin, dtype=np.int64).reshape(3)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(self.values.data.shape[2:])

    @property
    def channels(self) -> int:
        return self.values.data.shape[1]

    def with_values(self, values: Tensor) -> 'DenseTensor':
        return DenseTensor(values, self.origin)


# ---------------------------------------------------------------------------
# Rulebooks
# ---------------------------------------------------------------------------


def _subm_rulebook(cset: CoordSet) -> List[Tuple[int, np.ndarray, np.ndarray]]:
    rb = cset.cache.get('subm3')
    if rb is None:
        rb = []
        for o_idx, off in enumerate(OFFSETS_3):
            shifted = cset.coords.copy()
            shifted[:, 1:] += off
            idx, found = cset.index_of(shifted)
            out_idx = np.flatnonzero(found)
            if len(out_idx):
                rb.append((o_idx, idx[found], out_idx))
        cset.cache['subm3'] = rb
    return rb


def _down_rulebook(cset: CoordSet):
    rb = cset.cache.get('down2')
    if rb is None:
        parents = cset.coords.copy()
        parents[:, 1:] = np.floor_divide(parents[:, 1:], 2)
        pkeys = pack_keys(parents)
        out = CoordSet.from_keys(pkeys)
        p_idx, _ = lookup(out.keys, pkeys)
        local = cset.coords[:, 1:] - 2 * parents[:, 1:]
        o_code = local[:, 0] * 4 + local[:, 1] * 2 + local[:, 2]
        groups = []
        for o_idx in range(8):
            sel = np.flatnonzero(o_code == o_idx)
            if len(sel):
                groups.append((o_idx, sel, p_idx[sel]))
        rb = (out, groups)
        cset.cache['down2'] = rb
    return rb


def _up_rulebook(cset: CoordSet):
    rb = cset.cache.get('up2')
    if rb is None:
        n = len(cset)
        children = np.repeat(cset.coords, 8, axis=0)
        children[:, 1:] = 2 * children[:, 1:] + np.tile(OFFSETS_2, (n, 1))
        out = CoordSet(children)
        ckeys = pack_keys(children)
        c_idx, _ = lookup(out.keys, ckeys)
        parent = np.repeat(np.arange(n), 8)
        o_code = np.tile(np.arange(8), n)
        groups = []
        for o_idx in range(8):
            sel = o_code == o_idx
            groups.append((o_idx, parent[sel], c_idx[sel]))
        rb = (out, groups)
        cset.cache['up2'] = rb
    return rb


def _check_weights(x_channels: int, weights: Tensor, kernel: Tuple[int, ...]) -> int:
    w = weights.data
    if w.shape[:3] != kernel or w.ndim != 5:
        raise ShapeError(f"Ожидалось ядро {kernel}xCinxCout, получено {w.shape}")
    if w.shape[3] != x_channels:
        raise ShapeError(f"Число входных каналов {x_channels} не совпадает с ядром {w.shape[3]}")
    return w.shape[4]


def _apply_rulebook(x: Tensor, weights: Tensor, bias: Optional[Tensor],
                    rb, n_out: int, cout: int) -> Tensor:
    w_flat = weights.data.reshape(-1, weights.data.shape[3], cout)
    xd = x.data
    out = np.zeros((n_out, cout), dtype=xd.dtype)
    if bias is not None:
        out += bias.data
    for o_idx, src, dst in rb:
        out[dst] += xd[src] @ w_flat[o_idx]

    def _backward(g: np.ndarray) -> None:
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for o_idx, src, dst in rb:
                gx[src] += g[dst] @ w_flat[o_idx].T
            x.accumulate(gx)
        if weights.requires_grad:
            gw = np.zeros_like(w_flat)
            for o_idx, src, dst in rb:
                gw[o_idx] = xd[src].T @ g[dst]
            weights.accumulate(gw)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))

    parents = [x, weights] + ([bias] if bias is not None else [])
    return make_result(out, parents, _backward)


# ---------------------------------------------------------------------------
# Sparse convolutions
# ---------------------------------------------------------------------------


def subm_conv3(x: SparseTensor, weights: Tensor, bias: Optional[Tensor] = None) -> SparseTensor:
    """
    Субмногообразная свёртка 3x3x3: выходные координаты совпадают с входными.

    out(v) = bias + sum_o W[o] x(v + o) по активным соседям v + o.
    """
    cout = _check_weights(x.channels, weights, (3, 3, 3))
    rb = _subm_rulebook(x.cset)
    feats = _apply_rulebook(x.features, weights, bias, rb, len(x), cout)
    return SparseTensor(x.cset, feats)


def sparse_downconv2(x: SparseTensor, weights: Tensor,
                     bias: Optional[Tensor] = None) -> SparseTensor:
    """Свёртка 2x2x2 с шагом 2: родитель floor(c/2) собирает своих (до 8) потомков."""
    cout = _check_weights(x.channels, weights, (2, 2, 2))
    out_set, groups = _down_rulebook(x.cset)
    feats = _apply_rulebook(x.features, weights, bias, groups, len(out_set), cout)
    return SparseTensor(out_set, feats)


def sparse_upsample2(x: SparseTensor, weights: Tensor,
                     bias: Optional[Tensor] = None) -> SparseTensor:
    """Транспонированная свёртка 2x2x2 с шагом 2: каждый вход порождает 8 потомков."""
    cout = _check_weights(x.channels, weights, (2, 2, 2))
    out_set, groups = _up_rulebook(x.cset)
    feats = _apply_rulebook(x.features, weights, bias, groups, len(out_set), cout)
    return SparseTensor(out_set, feats)


# ---------------------------------------------------------------------------
# Dense convolution
# ---------------------------------------------------------------------------


def dense_conv3(x: DenseTensor, weights: Tensor, bias: Optional[Tensor] = None,
                stride: int = 1, padding: int = 0) -> DenseTensor:
    """
    Плотная 3D-кросскорреляция с ядром (k, k, k, Cin, Cout).

    Размер выхода по оси: floor((in + 2 pad - k) / stride) + 1.
    """
    w = weights.data
    if w.ndim != 5 or not (w.shape[0] == w.shape[1] == w.shape[2]):
        raise ShapeError(f"Ожидалось кубическое ядро kxkxkxCinxCout, получено {w.shape}")
    k, cin, cout = w.shape[0], w.shape[3], w.shape[4]
    xd = x.values.data
    if xd.shape[1] != cin:
        raise ShapeError(f"Число каналов {xd.shape[1]} не совпадает с ядром {cin}")
    if stride < 1 or padding < 0:
        raise ShapeError("stride >= 1 и padding >= 0")
    out_dims = [(n + 2 * padding - k) // stride + 1 for n in xd.shape[2:]]
    if min(out_dims) < 1:
        raise ShapeError(f"Размеры {xd.shape[2:]} несовместимы с ядром {k}, "
                         f"шагом {stride} и отступом {padding}")

    pad_width = ((0, 0), (0, 0), (padding, padding), (padding, padding), (padding, padding))
    xp = np.pad(xd, pad_width)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride][:, :, :out_dims[0], :out_dims[1], :out_dims[2]]
    out = np.einsum('bcxyzijk,ijkcd->bdxyz', win, w, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None, None]
    out = np.ascontiguousarray(out, dtype=xd.dtype)
    ox, oy, oz = out_dims

    def _backward(g: np.ndarray) -> None:
        if weights.requires_grad:
            weights.accumulate(np.einsum('bcxyzijk,bdxyz->ijkcd', win, g, optimize=True))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 2, 3, 4)))
        if x.values.requires_grad:
            gxp = np.zeros_like(xp)
            for i, j, l in itertools.product(range(k), repeat=3):
                gxp[:, :, i:i + stride * ox:stride, j:j + stride * oy:stride,
                    l:l + stride * oz:stride] += np.einsum('bdxyz,cd->bcxyz', g, w[i, j, l])
            sx, sy, sz = xd.shape[2:]
            x.values.accumulate(gxp[:, :, padding:padding + sx, padding:padding + sy,
                                    padding:padding + sz])

    parents = [x.values, weights] + ([bias] if bias is not None else [])
    origin = x.origin if stride == 1 else np.floor_divide(x.origin, stride)
    return DenseTensor(make_result(out, parents, _backward), origin)


# ---------------------------------------------------------------------------
# Sparse <-> dense
# ---------------------------------------------------------------------------


def to_dense(x: SparseTensor, origin, dims: Sequence[int], fill: float = 0.0,
             batch_size: Optional[int] = None) -> DenseTensor:
    """
    Рассеивает признаки в плотную сетку (B, C, dx, dy, dz) с началом origin.

    Raises:
        IndexError: если координата вне сетки
    """
    origin = np.asarray(origin, dtype=np.int64).reshape(3)
    dims = tuple(int(v) for v in dims)
    b = batch_size if batch_size is not None else max(x.cset.batch_size, 1)
    rel = x.coords[:, 1:] - origin
    batch = x.coords[:, 0]
    if len(x) and (np.any(rel < 0) or np.any(rel >= np.array(dims)) or batch.max() >= b):
        raise IndexError("Координата разреженного тензора вне плотной сетки")
    fd = x.features.data
    out = np.full((b, x.channels, *dims), fill, dtype=fd.dtype)
    out[batch, :, rel[:, 0], rel[:, 1], rel[:, 2]] = fd

    def _backward(g: np.ndarray) -> None:
        x.features.accumulate(g[batch, :, rel[:, 0], rel[:, 1], rel[:, 2]])

    return DenseTensor(make_result(out, [x.features], _backward), origin)


def to_sparse(x: DenseTensor, coords) -> SparseTensor:
    """
    Собирает признаки плотного тензора в заданных координатах (N, 4).

    Raises:
        IndexError: если координата вне сетки
    """
    cset = coords if isinstance(coords, CoordSet) else CoordSet(coords)
    rel = cset.coords[:, 1:] - x.origin
    batch = cset.coords[:, 0]
    vd = x.values.data
    if len(cset) and (np.any(rel < 0) or np.any(rel >= np.array(vd.shape[2:]))
                      or batch.max() >= vd.shape[0]):
        raise IndexError("Координата вне плотной сетки")
    out = vd[batch, :, rel[:, 0], rel[:, 1], rel[:, 2]].reshape(len(cset), vd.shape[1])

    def _backward(g: np.ndarray) -> None:
        gx = np.zeros_like(vd)
        gx[batch, :, rel[:, 0], rel[:, 1], rel[:, 2]] = g
        x.values.accumulate(gx)

    return SparseTensor(cset, make_result(np.ascontiguousarray(out), [x.values], _backward))


def dense_coords(x: DenseTensor) -> CoordSet:
    """Все координаты плотной сетки как CoordSet."""
    b = x.values.data.shape[0]
    dx, dy, dz = x.dims
    grid = np.stack(np.meshgrid(np.arange(b), np.arange(dx), np.arange(dy), np.arange(dz),
                                indexing='ij'), axis=-1).reshape(-1, 4)
    grid[:, 1:] += x.origin
    return CoordSet(grid)


def skip_concat(dst: SparseTensor, src: SparseTensor) -> SparseTensor:
    """
    Конкатенация признаков dst с признаками src в тех же координатах.

    Где координаты dst нет в src, добавляются нулевые каналы.
    """
    idx, found = lookup(src.cset.keys, dst.cset.keys)
    sd = src.features.data
    dd = dst.features.data
    gathered = np.zeros((len(dst), sd.shape[1]), dtype=dd.dtype)
    gathered[found] = sd[idx[found]]
    out = np.concatenate([dd, gathered], axis=1)
    cd = dd.shape[1]

    def _backward(g: np.ndarray) -> None:
        dst.features.accumulate(g[:, :cd])
        if src.features.requires_grad:
            gs = np.zeros_like(sd)
            gs[idx[found]] = g[found, cd:]
            src.features.accumulate(gs)

    return SparseTensor(dst.cset, make_result(out, [dst.features, src.features], _backward))


def select(x: SparseTensor, rows: np.ndarray) -> SparseTensor:
    """Подмножество строк (rows - отсортированные индексы) с сохранением порядка ключей."""
    rows = np.asarray(rows, dtype=np.int64)
    cset = CoordSet(x.coords[rows], x.cset.keys[rows], assume_sorted=True)
    fd = x.features.data

    def _backward(g: np.ndarray) -> None:
        gx = np.zeros_like(fd)
        gx[rows] = g
        x.features.accumulate(gx)

    return SparseTensor(cset, make_result(fd[rows], [x.features], _backward))
