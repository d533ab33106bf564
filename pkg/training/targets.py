# -*- coding: utf-8 -*-
"""targets.py

Цели по уровням иерархии и суммарная потеря.

Цель уровня k (шаг 2^(L-k)) получается огрублением полной цели
downsample_target с фактором 2^(L-k): TSDF уровня = d / фактор, обрезанный до
[-tau, tau]; занятость = |d| < tau у выбранного потомка; маска = OR
наблюдаемости потомков (без родителей, чей выбранный d <= -tau). Индекс L
соответствует полному разрешению.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from grid.voxels import SparseTSDF, VoxelSet, downsample_target
from model.config import ModelConfig
from model.sgnn import GateHint, HierarchyOutput, LevelOutput
from selfsup.pairs import ScanPair
from sparsenn.losses import bce_logits, mask_values, masked_l1_logtsdf
from sparsenn.tensor import Tensor, make_result
from training.config import TrainConfig


@dataclass(slots=True)
class LevelTarget:
    tsdf: SparseTSDF
    occupied: VoxelSet
    mask: VoxelSet


def level_targets(pair: ScanPair, levels: int) -> List[LevelTarget]:
    """Цели уровней 0..L (L = полное разрешение) для одной пары."""
    target = pair.target
    tau = target.truncation
    out: List[LevelTarget] = []
    for k in range(levels):
        factor = 2 ** (levels - k)
        pooled = downsample_target(target, factor)
        scaled = SparseTSDF(pooled.coords, np.clip(pooled.d / factor, -tau, tau), pooled.w,
                            pooled.observed, voxel_size=pooled.voxel_size, truncation=tau,
                            validate=False)
        out.append(LevelTarget(scaled,
                               VoxelSet(keys=pooled.keys[np.abs(pooled.d) < tau]),
                               VoxelSet(keys=pooled.keys[pooled.observed])))
    out.append(LevelTarget(target, VoxelSet(keys=target.keys[np.abs(target.d) < tau]), pair.mask))
    return out


def gate_hint(targets: Sequence[List[LevelTarget]], use_mask: bool = True) -> GateHint:
    """Добавка к гейту при обучении: занятые (и наблюдаемые) координаты цели уровня."""
    cache: Dict[int, List[VoxelSet]] = {}

    def _hint(level: int, coords: np.ndarray) -> np.ndarray:
        if level not in cache:
            cache[level] = [(t[level].occupied & t[level].mask) if use_mask else t[level].occupied
                            for t in targets]
        return mask_values(coords, cache[level])

    return _hint


def _weighted_sum(terms: Sequence[Tuple[float, Tensor]]) -> Tensor:
    active = [(w, t) for w, t in terms if w != 0]
    value = np.array(sum(w * float(t.data) for w, t in active))

    def _backward(g: np.ndarray) -> None:
        for w, t in active:
            t.accumulate(w * g)

    return make_result(value, [t for _, t in active], _backward)


def _level_terms(level: LevelOutput, targets: Sequence[List[LevelTarget]], index: int,
                 use_mask: bool) -> Tuple[Tensor, Optional[Tensor]]:
    masks = [t[index].mask for t in targets] if use_mask else None
    occ = bce_logits(level.occupancy, [t[index].occupied for t in targets], masks)
    sdf = None
    if level.sdf is not None:
        sdf = masked_l1_logtsdf(level.sdf, [t[index].tsdf for t in targets], masks)
    return occ, sdf


def total_loss(out: HierarchyOutput, targets: Sequence[List[LevelTarget]],
               cfg: TrainConfig, model_cfg: ModelConfig) -> Tuple[Tensor, Dict[str, float]]:
    """
    Суммарная потеря прохода.

    Σ по уровням [w_occ * BCE(O_k) + w_sdf * l1(t(S_k))] плюс, если все
    уровни активны, прокси финального шага и w_final * l1(t(финальный TSDF))
    (или BCE при выходе-занятости).

    Returns:
        Кортеж (скалярная потеря, значения слагаемых по именам)
    """
    terms: List[Tuple[float, Tensor]] = []
    log: Dict[str, float] = {}
    use_mask = cfg.use_mask
    levels = list(out.levels) + ([out.final_level] if out.final_level is not None else [])
    for level in levels:
        occ, sdf = _level_terms(level, targets, level.index, use_mask)
        terms.append((cfg.w_occ, occ))
        log[f"occ_{level.index}"] = float(occ.data)
        if sdf is not None:
            terms.append((cfg.w_sdf, sdf))
            log[f"sdf_{level.index}"] = float(sdf.data)
    if out.final is not None:
        L = model_cfg.levels
        masks = [t[L].mask for t in targets] if use_mask else None
        if model_cfg.predicts_sdf:
            final = masked_l1_logtsdf(out.final, [t[L].tsdf for t in targets], masks)
        else:
            final = bce_logits(out.final, [t[L].occupied for t in targets], masks)
        terms.append((cfg.w_final, final))
        log['final'] = float(final.data)
    total = _weighted_sum(terms)
    log['total'] = float(total.data)
    return total, log
