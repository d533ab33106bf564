"""Архитектура иерархической разреженной генеративной сети."""

from model.config import ModelConfig
from model.sgnn import (SGNNModel, HierarchyOutput, LevelOutput, sparsify_gate,
                        complete_scan)

__all__ = ['ModelConfig', 'SGNNModel', 'HierarchyOutput', 'LevelOutput', 'sparsify_gate',
           'complete_scan']
