# -*- coding: utf-8 -*-
"""functional.py

Поэлементные операции, батч-нормализация и конкатенация для разреженных и
плотных тензоров. Для SparseTensor операция применяется к матрице признаков
(N, C), для DenseTensor - по каналу (ось 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import ShapeError
from sparsenn.sparse import DenseTensor, SparseTensor
from sparsenn.tensor import Tensor, make_result

Feature = Union[SparseTensor, DenseTensor]

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def _unwrap(x: Feature) -> Tensor:
    return x.features if isinstance(x, SparseTensor) else x.values


def _rewrap(x: Feature, t: Tensor) -> Feature:
    return x.with_features(t) if isinstance(x, SparseTensor) else x.with_values(t)


# ---------------------------------------------------------------------------
# Tensor-level ops
# ---------------------------------------------------------------------------


def t_relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.data.dtype), [x],
                       lambda g: x.accumulate(g * mask))


def t_sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)
    return make_result(s, [x], lambda g: x.accumulate(g * s * (1 - s)))


def t_clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return make_result(np.clip(x.data, lo, hi), [x], lambda g: x.accumulate(g * inside))


def t_add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"Формы слагаемых не совпадают: {a.data.shape} и {b.data.shape}")

    def _backward(g):
        a.accumulate(g)
        b.accumulate(g)

    return make_result(a.data + b.data, [a, b], _backward)


def t_concat(a: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    ca = a.data.shape[axis]

    def _backward(g):
        a.accumulate(np.take(g, np.arange(ca), axis=axis))
        b.accumulate(np.take(g, np.arange(ca, g.shape[axis]), axis=axis))

    return make_result(np.concatenate([a.data, b.data], axis=axis), [a, b], _backward)


def t_sum(x: Tensor) -> Tensor:
    return make_result(np.array(x.data.sum()), [x],
                       lambda g: x.accumulate(np.broadcast_to(g, x.data.shape)))


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# Feature-level ops
# ---------------------------------------------------------------------------


def relu(x: Feature) -> Feature:
    return _rewrap(x, t_relu(_unwrap(x)))


def sigmoid(x: Feature) -> Feature:
    return _rewrap(x, t_sigmoid(_unwrap(x)))


def clamp(x: Feature, lo: float, hi: float) -> Feature:
    return _rewrap(x, t_clamp(_unwrap(x), lo, hi))


def add(a: Feature, b: Feature) -> Feature:
    """Сумма; для разреженных тензоров множества координат должны совпадать."""
    if isinstance(a, SparseTensor):
        if not isinstance(b, SparseTensor) or not np.array_equal(a.cset.keys, b.cset.keys):
            raise ShapeError("add требует одинаковых множеств координат")
    return _rewrap(a, t_add(_unwrap(a), _unwrap(b)))


def concat_features(a: Feature, b: Feature) -> Feature:
    """Конкатенация каналов двух тензоров с одинаковыми координатами."""
    if isinstance(a, SparseTensor):
        if not isinstance(b, SparseTensor) or not np.array_equal(a.cset.keys, b.cset.keys):
            raise ShapeError("concat_features требует одинаковых множеств координат")
        return a.with_features(t_concat(a.features, b.features, axis=1))
    if a.values.data.shape[2:] != b.values.data.shape[2:]:
        raise ShapeError("concat_features требует одинаковых пространственных размеров")
    return a.with_values(t_concat(a.values, b.values, axis=1))


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class BatchNormState:
    """Скользящие статистики батч-нормализации."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS


def _bn_matrix(x: Tensor, channel_last: bool):
    """Представляет данные как матрицу (M, C) и возвращает обратное преобразование."""
    if channel_last:
        return x.data, (lambda m: m)
    d = x.data
    moved = np.moveaxis(d, 1, -1)
    shape = moved.shape
    return (moved.reshape(-1, d.shape[1]),
            lambda m: np.ascontiguousarray(np.moveaxis(m.reshape(shape), -1, 1)))


def batchnorm(x: Feature, gamma: Tensor, beta: Tensor, state: BatchNormState,
              training: bool) -> Feature:
    """
    Батч-нормализация по каналам.

    В режиме обучения нормирует по всем активным позициям минибатча и обновляет
    скользящие статистики (momentum 0.1); в режиме оценки использует их.
    """
    t = _unwrap(x)
    mat, restore = _bn_matrix(t, isinstance(x, SparseTensor))
    c = mat.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"Параметры батч-нормы ожидают {c} каналов")
    n = mat.shape[0]
    g_ = gamma.data
    if training and n > 0:
        mean = mat.mean(axis=0)
        var = mat.var(axis=0)
        unbiased = var * n / (n - 1) if n > 1 else var
        state.running_mean[:] = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var[:] = (1 - state.momentum) * state.running_var + state.momentum * unbiased
    else:
        mean = state.running_mean.astype(mat.dtype)
        var = state.running_var.astype(mat.dtype)
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(mat.dtype)
    xhat = (mat - mean) * inv_std
    out = xhat * g_ + beta.data
    batch_stats = training and n > 0

    def _backward(g: np.ndarray) -> None:
        gm, _ = _bn_matrix(Tensor(g), isinstance(x, SparseTensor))
        if gamma.requires_grad:
            gamma.accumulate((gm * xhat).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate(gm.sum(axis=0))
        if t.requires_grad:
            dxhat = gm * g_
            if batch_stats:
                dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                      - xhat * (dxhat * xhat).sum(axis=0))
            else:
                dx = dxhat * inv_std
            t.accumulate(restore(dx))

    return _rewrap(x, make_result(restore(out.astype(mat.dtype)), [t, gamma, beta], _backward))
