# -*- coding: utf-8 -*-
"""tensor.py

Узел графа вычислений для обратного автоматического дифференцирования.

Каждая операция создаёт Tensor с замыканием ``_backward``, которое по
градиенту выхода накапливает градиенты родителей. ``backward`` обходит граф в
обратном топологическом порядке. Точность по умолчанию float32; для проверок
конечными разностями включается float64 через контекст ``precision``.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np

from errors import UsageError

_default_dtype = np.float32


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype).type


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Временно меняет точность по умолчанию (например, float64 для тестов)."""
    old = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


class Tensor:
    """
    Массив значений с градиентом и ссылками на родителей в графе.

    Attributes:
        data: Значения (numpy)
        grad: Градиент той же формы или None, пока не вычислен
        requires_grad: Нужно ли накапливать градиент
    """
    __slots__ = ('data', 'grad', 'requires_grad', '_parents', '_backward', 'name')

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence['Tensor'] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None,
                 name: str = ''):
        arr = np.asarray(data)
        if arr.dtype.kind != 'f':
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = np.asarray(g, dtype=self.data.dtype).reshape(self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def make_result(data: np.ndarray, parents: Sequence[Tensor],
                backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Создаёт выход операции; замыкание сохраняется только если нужен градиент."""
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward=backward_fn if needs else None)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Обратный проход от скалярного loss.

    Raises:
        UsageError: если loss не скаляр
    """
    if loss.data.size != 1:
        raise UsageError(f"backward ожидает скаляр, получена форма {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
