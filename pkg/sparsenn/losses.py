# -*- coding: utf-8 -*-
"""losses.py

Маскированные функции потерь. Потери учитываются только в координатах
предсказания, попавших в маску; вне маски вклад и градиент равны нулю.
Цели и маски задаются на образец батча (по индексу batch координаты).
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from errors import ShapeError
from grid.voxels import SparseTSDF, VoxelSet
from sparsenn.functional import stable_sigmoid
from sparsenn.sparse import SparseTensor
from sparsenn.tensor import Tensor, make_result

Targets = Union[SparseTSDF, Sequence[SparseTSDF]]
Masks = Union[None, np.ndarray, VoxelSet, Sequence[VoxelSet]]


def log_transform(d: np.ndarray) -> np.ndarray:
    """t(d) = sign(d) * ln(1 + |d|)."""
    return np.sign(d) * np.log1p(np.abs(d))


def _per_batch(coords: np.ndarray, items, fn, default) -> np.ndarray:
    """Применяет fn(item, xyz) к строкам каждого образца батча."""
    out = np.full(len(coords), default, dtype=type(default) if not isinstance(default, bool) else bool)
    if len(coords) == 0:
        return out
    if not isinstance(items, (list, tuple)):
        return fn(items, coords[:, 1:])
    batch = coords[:, 0]
    for b in np.unique(batch):
        if b >= len(items):
            raise ShapeError(f"Нет цели для образца батча {b}")
        rows = np.flatnonzero(batch == b)
        out[rows] = fn(items[b], coords[rows, 1:])
    return out


def target_values(coords: np.ndarray, target: Targets, fill: Optional[float] = None
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Значения целевого TSDF в координатах (N, 4).

    Returns:
        Кортеж (значения, есть_запись); отсутствующие записи = fill (по умолчанию +tau)
    """
    def _values(t: SparseTSDF, xyz):
        idx, found = t.lookup(xyz)
        f = t.truncation if fill is None else fill
        return np.where(found, t.d[idx] if len(t) else f, f)

    def _present(t: SparseTSDF, xyz):
        return t.lookup(xyz)[1]

    return (_per_batch(coords, target, _values, 0.0),
            _per_batch(coords, target, _present, False))


def occupancy_values(coords: np.ndarray, target: Targets) -> np.ndarray:
    """1, если в координате есть запись цели с |d| < tau, иначе 0."""
    def _occ(t: SparseTSDF, xyz):
        idx, found = t.lookup(xyz)
        if len(t) == 0:
            return np.zeros(len(xyz))
        return (found & (np.abs(t.d[idx]) < t.truncation)).astype(np.float64)

    return _per_batch(coords, target, _occ, 0.0)


def mask_values(coords: np.ndarray, mask: Masks) -> np.ndarray:
    """Булева маска для координат (N, 4); None = все координаты."""
    if mask is None:
        return np.ones(len(coords), dtype=bool)
    if isinstance(mask, np.ndarray):
        if mask.shape != (len(coords),):
            raise ShapeError("Маска-массив должна совпадать по длине с координатами")
        return mask.astype(bool)
    return _per_batch(coords, mask, lambda m, xyz: m.contains(xyz), False)


def _zero_loss(x: Tensor) -> Tensor:
    return make_result(np.zeros((), dtype=x.data.dtype), [x],
                       lambda g: x.accumulate(np.zeros_like(x.data)))


def _sample_sum(values: np.ndarray, groups: Optional[np.ndarray]) -> float:
    """
    Сумма значений, не зависящая от порядка образцов батча.

    Суммы считаются отдельно по каждому образцу (groups = индекс batch строки),
    затем складываются в порядке возрастания.
    """
    if groups is None:
        return float(values.sum())
    _, inverse = np.unique(groups, return_inverse=True)
    per_sample = np.zeros(inverse.max() + 1)
    np.add.at(per_sample, inverse, values)
    return float(np.sort(per_sample).sum())


def masked_l1(pred: Tensor, target: np.ndarray, mask: np.ndarray,
              log: bool = True, groups: Optional[np.ndarray] = None) -> Tensor:
    """
    Среднее |t(pred) - t(target)| по маскированным строкам предсказания (N, 1).

    groups: индекс образца каждой строки; сумма тогда не зависит от порядка образцов.
    """
    if pred.data.ndim != 2 or pred.data.shape[1] != 1:
        raise ShapeError(f"Ожидался один канал, получено {pred.data.shape}")
    sel = np.flatnonzero(mask)
    n = len(sel)
    if n == 0:
        return _zero_loss(pred)
    p = pred.data[sel, 0].astype(np.float64)
    t = np.asarray(target, dtype=np.float64)[sel]
    diff = (log_transform(p) - log_transform(t)) if log else (p - t)
    value = _sample_sum(np.abs(diff), None if groups is None else groups[sel]) / n
    dtdp = 1.0 / (1.0 + np.abs(p)) if log else np.ones_like(p)

    def _backward(g: np.ndarray) -> None:
        grad = np.zeros(pred.data.shape, dtype=np.float64)
        grad[sel, 0] = float(g) * np.sign(diff) * dtdp / n
        pred.accumulate(grad)

    return make_result(np.array(value, dtype=pred.data.dtype), [pred], _backward)


def masked_l1_logtsdf(pred_d: SparseTensor, target: Targets, mask: Masks,
                      log: bool = True) -> Tensor:
    """
    Маскированный l1 между лог-преобразованными TSDF.

    Отсутствующая в цели запись в маскированной координате считается
    свободным пространством (+tau).
    """
    if pred_d.channels != 1:
        raise ShapeError(f"Ожидался один канал, получено {pred_d.channels}")
    tv, _ = target_values(pred_d.coords, target)
    return masked_l1(pred_d.features, tv, mask_values(pred_d.coords, mask), log=log,
                     groups=pred_d.coords[:, 0])


def bce_logits_values(pred: Tensor, target: np.ndarray, mask: np.ndarray,
                      groups: Optional[np.ndarray] = None) -> Tensor:
    """Бинарная кросс-энтропия по логитам (устойчивая форма) по маскированным строкам."""
    if pred.data.ndim != 2 or pred.data.shape[1] != 1:
        raise ShapeError(f"Ожидался один канал, получено {pred.data.shape}")
    sel = np.flatnonzero(mask)
    n = len(sel)
    if n == 0:
        return _zero_loss(pred)
    z = pred.data[sel, 0].astype(np.float64)
    y = np.asarray(target, dtype=np.float64)[sel]
    per_row = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    value = _sample_sum(per_row, None if groups is None else groups[sel]) / n

    def _backward(g: np.ndarray) -> None:
        grad = np.zeros(pred.data.shape, dtype=np.float64)
        grad[sel, 0] = float(g) * (stable_sigmoid(z) - y) / n
        pred.accumulate(grad)

    return make_result(np.array(value, dtype=pred.data.dtype), [pred], _backward)


def bce_logits(pred_logits: SparseTensor, target_occupancy, mask: Masks) -> Tensor:
    """
    BCE с целевыми занятостями.

    Args:
        pred_logits: Логиты (1 канал)
        target_occupancy: Массив 0/1 по координатам предсказания, множество(а)
            занятых вокселей VoxelSet либо TSDF-цель(и), из которых занятость
            берётся как |d| < tau
        mask: Маска (массив, VoxelSet, список VoxelSet или None)
    """
    if pred_logits.channels != 1:
        raise ShapeError(f"Ожидался один канал, получено {pred_logits.channels}")
    occ = target_occupancy
    if isinstance(occ, np.ndarray):
        y = occ.astype(np.float64).reshape(-1)
        if y.shape != (len(pred_logits),):
            raise ShapeError("Занятости должны совпадать по длине с координатами")
    elif isinstance(occ, VoxelSet) or (isinstance(occ, (list, tuple)) and occ
                                       and isinstance(occ[0], VoxelSet)):
        y = mask_values(pred_logits.coords, occ).astype(np.float64)
    else:
        y = occupancy_values(pred_logits.coords, target_occupancy)
    return bce_logits_values(pred_logits.features, y, mask_values(pred_logits.coords, mask),
                             groups=pred_logits.coords[:, 0])
