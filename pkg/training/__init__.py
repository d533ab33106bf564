# -*- coding: utf-8 -*-
"""Прогрессивное обучение SGNN."""

from training.config import TrainConfig
from training.targets import LevelTarget, level_targets, gate_hint, total_loss
from training.trainer import (Trainer, train, load_checkpoint, model_to_checkpoint,
                              model_from_checkpoint, restore_state, loss_columns)

__all__ = [
    'TrainConfig', 'LevelTarget', 'level_targets', 'gate_hint', 'total_loss',
    'Trainer', 'train', 'load_checkpoint', 'model_to_checkpoint', 'model_from_checkpoint',
    'restore_state', 'loss_columns',
]
