# -*- coding: utf-8 -*-
"""layers.py

Слои с параметрами поверх операций sparsenn и базовый класс Module,
который собирает параметры и буферы по атрибутам в порядке их объявления.
"""
from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from errors import ShapeError
from sparsenn import functional as F
from sparsenn.optim import Parameter
from sparsenn.tensor import get_default_dtype
from sparsenn.sparse import (DenseTensor, SparseTensor, dense_conv3, sparse_downconv2,
                             sparse_upsample2, subm_conv3)


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=shape)


class Module:
    """Базовый класс слоя: обход параметров, буферов и режимов train/eval."""

    def __init__(self):
        self.training = True

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item
            else:
                yield name, value

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + '.')

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, F.BatchNormState):
                yield f"{full}.running_mean", value.running_mean
                yield f"{full}.running_var", value.running_var
            elif isinstance(value, Module):
                yield from value.named_buffers(full + '.')

    def modules(self) -> Iterator['Module']:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> 'Module':
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Параметры и буферы по именам (без копирования)."""
        out = {name: p.data for name, p in self.named_parameters()}
        out.update(dict(self.named_buffers()))
        return out


class _Conv(Module):
    kernel: Tuple[int, int, int] = (3, 3, 3)

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, bias: bool = True,
                 kernel: Optional[int] = None):
        super().__init__()
        if cin < 1 or cout < 1:
            raise ShapeError(f"Число каналов должно быть положительным: {cin}, {cout}")
        if kernel is not None:
            self.kernel = (kernel,) * 3
        shape = (*self.kernel, cin, cout)
        self.weight = Parameter(he_normal(rng, shape, int(np.prod(self.kernel)) * cin))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.cin = cin
        self.cout = cout


class SubmConv3(_Conv):
    kernel = (3, 3, 3)

    def __call__(self, x: SparseTensor) -> SparseTensor:
        return subm_conv3(x, self.weight, self.bias)


class SparseDownConv2(_Conv):
    kernel = (2, 2, 2)

    def __call__(self, x: SparseTensor) -> SparseTensor:
        return sparse_downconv2(x, self.weight, self.bias)


class SparseUpsample2(_Conv):
    kernel = (2, 2, 2)

    def __call__(self, x: SparseTensor) -> SparseTensor:
        return sparse_upsample2(x, self.weight, self.bias)


class DenseConv3(_Conv):
    """Плотная свёртка (k, stride, padding); по умолчанию 3/1/1."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, bias: bool = True,
                 kernel: int = 3, stride: int = 1, padding: int = 1):
        super().__init__(cin, cout, rng, bias=bias, kernel=kernel)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: DenseTensor) -> DenseTensor:
        return dense_conv3(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        dtype = get_default_dtype()
        self.state = F.BatchNormState(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def __call__(self, x):
        return F.batchnorm(x, self.gamma, self.beta, self.state, self.training)


class ConvBNReLU(Module):
    """Свёртка, затем батч-нормализация и ReLU."""

    def __init__(self, conv: _Conv):
        super().__init__()
        self.conv = conv
        self.bn = BatchNorm(conv.cout)

    def __call__(self, x):
        return F.relu(self.bn(self.conv(x)))
