# -*- coding: utf-8 -*-
"""Обратное автодифференцирование на numpy с разреженными 3D-свёртками."""

from sparsenn.tensor import Tensor, backward, precision, get_default_dtype, set_default_dtype
from sparsenn.sparse import (CoordSet, SparseTensor, DenseTensor, subm_conv3,
                             sparse_downconv2, sparse_upsample2, dense_conv3, to_dense,
                             to_sparse, skip_concat, select)
from sparsenn.functional import relu, sigmoid, clamp, add, concat_features, batchnorm
from sparsenn.losses import masked_l1_logtsdf, bce_logits, log_transform
from sparsenn.optim import Parameter, adam_step

__all__ = [
    'Tensor', 'backward', 'precision', 'get_default_dtype', 'set_default_dtype',
    'CoordSet', 'SparseTensor', 'DenseTensor', 'subm_conv3', 'sparse_downconv2',
    'sparse_upsample2', 'dense_conv3', 'to_dense', 'to_sparse', 'skip_concat', 'select',
    'relu', 'sigmoid', 'clamp', 'add', 'concat_features', 'batchnorm',
    'masked_l1_logtsdf', 'bce_logits', 'log_transform', 'Parameter', 'adam_step',
]
