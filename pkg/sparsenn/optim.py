# -*- coding: utf-8 -*-
"""optim.py

Обучаемые параметры и оптимизатор Adam.
"""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from sparsenn.tensor import Tensor, get_default_dtype

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Parameter(Tensor):
    """
    Лист графа с градиентом и состоянием Adam.

    Attributes:
        m, v: Первый и второй моменты Adam (None до первого шага)
        step: Число выполненных шагов Adam для этого параметра
    """
    __slots__ = ('m', 'v', 'step')

    def __init__(self, data, name: str = ''):
        arr = np.array(data, dtype=get_default_dtype())
        super().__init__(arr, requires_grad=True, name=name)
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.step = 0

    def reset_state(self) -> None:
        self.m = None
        self.v = None
        self.step = 0


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad = None


def adam_step(params: Iterable[Parameter], lr: float, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> int:
    """
    Один шаг Adam с поправкой смещения моментов.

    Параметры без градиента (grad is None) пропускаются: их значения,
    моменты и счётчик шагов не меняются.

    Returns:
        Количество обновлённых параметров
    """
    updated = 0
    for p in params:
        if p.grad is None:
            continue
        # моменты хранятся в точности параметра
        dtype = p.data.dtype
        g = p.grad.astype(np.float64)
        if p.m is None:
            p.m = np.zeros(p.data.shape, dtype=dtype)
            p.v = np.zeros(p.data.shape, dtype=dtype)
        p.step += 1
        p.m = (beta1 * p.m + (1 - beta1) * g).astype(dtype)
        p.v = (beta2 * p.v + (1 - beta2) * g * g).astype(dtype)
        m_hat = p.m / (1 - beta1 ** p.step)
        v_hat = p.v / (1 - beta2 ** p.step)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
        updated += 1
    return updated
