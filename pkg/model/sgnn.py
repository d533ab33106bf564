#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Иерархическая разреженная генеративная сеть завершения сцен.

Энкодер из L стадий сжимает вход в 2 раза на каждой стадии. На самом
грубом шаге признаки переводятся в плотную сетку, где предсказываются
занятость O_0 и TSDF S_0 (уровень 0). Далее каждый уровень иерархии
оставляет воксели с sigmoid(O_k) > 0.5, объединяет признаки с пропусками
энкодера того же шага, повышает разрешение в 2 раза и предсказывает
следующий уровень. После уровня L-1 (шаг 2) последний шаг иерархии выходит
на шаг 1, и финальный блок уточняет значения TSDF.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from errors import InferenceError
from grid.voxels import SparseTSDF
from model.config import ModelConfig
from sparsenn import functional as F
from sparsenn.layers import (ConvBNReLU, DenseConv3, Module, SparseDownConv2,
                             SparseUpsample2, SubmConv3)
from sparsenn.sparse import (DenseTensor, SparseTensor, dense_coords, select, skip_concat,
                             to_dense, to_sparse)
from sparsenn.tensor import get_default_dtype

logger = logging.getLogger('SGNN.Model')

# (индекс уровня, координаты (N, 4)) -> булева маска строк, добавляемых к гейту
GateHint = Callable[[int, np.ndarray], np.ndarray]


@dataclass(slots=True)
class LevelOutput:
    """
    Предсказание одного уровня.

    Attributes:
        index: k для уровней 0..L-1, L для финального шага на разрешении 1
        stride: Шаг сетки уровня в исходных вокселях
        features: F_k
        occupancy: Логиты O_k (1 канал)
        sdf: S_k (1 канал) или None при выходе-занятости
    """

    index: int
    stride: int
    features: SparseTensor
    occupancy: SparseTensor
    sdf: Optional[SparseTensor]

    @property
    def coords(self) -> np.ndarray:
        return self.features.coords

    def __len__(self) -> int:
        return len(self.features)


@dataclass(slots=True)
class HierarchyOutput:
    """Результат прохода: уровни 0..active-1, финальный шаг и уточнённый TSDF."""

    active_levels: int
    levels: List[LevelOutput]
    dense: Tuple[DenseTensor, DenseTensor, Optional[DenseTensor]]
    final_level: Optional[LevelOutput] = None
    final: Optional[SparseTensor] = None


def _empty_sparse(channels: int) -> SparseTensor:
    return SparseTensor.from_arrays(np.zeros((0, 4), dtype=np.int64), np.zeros((0, channels)))


def sparsify_gate(occupancy: SparseTensor, features: SparseTensor,
                  sdf: Optional[SparseTensor] = None,
                  extra: Optional[np.ndarray] = None) -> SparseTensor:
    """
    Оставляет координаты с sigmoid(O) > 0.5 (строго, т.е. логит > 0) и
    собирает признаки concat(F, O, S).

    Args:
        occupancy: Логиты занятости
        features: Признаки уровня на тех же координатах
        sdf: TSDF уровня на тех же координатах (может отсутствовать)
        extra: Дополнительные строки, включаемые в гейт (обучение)
    """
    rows = occupancy.features.data[:, 0] > 0
    if extra is not None:
        rows = rows | np.asarray(extra, dtype=bool)
    cat = F.concat_features(features, occupancy)
    if sdf is not None:
        cat = F.concat_features(cat, sdf)
    return select(cat, np.flatnonzero(rows))


class EncoderStage(Module):
    """Две субмногообразные свёртки и свёртка с шагом 2, каждая с BN+ReLU."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = ConvBNReLU(SubmConv3(cin, cout, rng))
        self.conv2 = ConvBNReLU(SubmConv3(cout, cout, rng))
        self.down = ConvBNReLU(SparseDownConv2(cout, cout, rng))

    def __call__(self, x: SparseTensor) -> SparseTensor:
        return self.down(self.conv2(self.conv1(x)))


class CoarsePredictor(Module):
    def __init__(self, channels: int, with_sdf: bool, rng: np.random.Generator):
        super().__init__()
        self.conv1 = ConvBNReLU(DenseConv3(channels, channels, rng))
        self.conv2 = ConvBNReLU(DenseConv3(channels, channels, rng))
        self.occ_head = DenseConv3(channels, 1, rng, kernel=1, padding=0)
        self.sdf_head = DenseConv3(channels, 1, rng, kernel=1, padding=0) if with_sdf else None

    def __call__(self, x: DenseTensor):
        f = self.conv2(self.conv1(x))
        return f, self.occ_head(f), (self.sdf_head(f) if self.sdf_head is not None else None)


class HierarchyLevel(Module):
    def __init__(self, cin: int, cskip: int, cmid: int, cout: int, with_sdf: bool,
                 rng: np.random.Generator):
        super().__init__()
        self.conv1 = ConvBNReLU(SubmConv3(cin + cskip, cmid, rng))
        self.conv2 = ConvBNReLU(SubmConv3(cmid, cmid, rng))
        self.up = ConvBNReLU(SparseUpsample2(cmid, cout, rng))
        self.conv3 = ConvBNReLU(SubmConv3(cout, cout, rng))
        self.occ_head = SubmConv3(cout, 1, rng)
        self.sdf_head = SubmConv3(cout, 1, rng) if with_sdf else None
        self.cout = cout

    def __call__(self, x: SparseTensor, skip: SparseTensor):
        h = self.conv2(self.conv1(skip_concat(x, skip)))
        f = self.conv3(self.up(h))
        return f, self.occ_head(f), (self.sdf_head(f) if self.sdf_head is not None else None)


class Refiner(Module):
    def __init__(self, cin: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = ConvBNReLU(SubmConv3(cin, width, rng))
        self.conv2 = ConvBNReLU(SubmConv3(width, width, rng))
        self.head = SubmConv3(width, 1, rng)

    def __call__(self, x: SparseTensor) -> SparseTensor:
        return self.head(self.conv2(self.conv1(x)))


class SGNNModel(Module):
    """
    Модель завершения сцены с прогрессивной активацией уровней.

    Args:
        config: Гиперпараметры
        seed: Зерно инициализации весов
    """

    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        L = cfg.levels
        rng = np.random.default_rng(seed)
        with_sdf = cfg.predicts_sdf
        heads = 2 if with_sdf else 1

        stages = []
        cin = 1
        for i in range(1, L + 1):
            stages.append(EncoderStage(cin, cfg.width(i), rng))
            cin = cfg.width(i)
        self.encoder = stages
        self.coarse = CoarsePredictor(cfg.width(L), with_sdf, rng)

        levels = []
        c_feat = cfg.width(L)
        for k in range(L):
            s = L - k
            levels.append(HierarchyLevel(c_feat + heads, cfg.width(s), cfg.width(s),
                                         cfg.width(s - 1), with_sdf, rng))
            c_feat = cfg.width(s - 1)
        self.hierarchy = levels
        self.refiner = Refiner(c_feat + heads, cfg.base_width, rng)
        logger.debug(f"Модель: L={L}, base_width={cfg.base_width}, "
                     f"параметров {sum(p.data.size for p in self.parameters())}")

    # ------------------------------------------------------------------
    # Progressive schedule
    # ------------------------------------------------------------------

    def activation_level(self, param_name: str) -> int:
        """Число активных уровней, начиная с которого параметр участвует в обучении."""
        L = self.config.levels
        head = param_name.split('.')
        if head[0] in ('encoder', 'coarse'):
            return 1
        if head[0] == 'hierarchy':
            return min(int(head[1]) + 2, L)
        return L

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def input_tensor(self, scans: Sequence[SparseTSDF]) -> SparseTensor:
        """
        Входной разреженный тензор батча.

        tsdf: записи с |d| < tau, признак d; occupancy: те же записи, признак 1;
        pointcloud: только поверхностные воксели (|d| <= 1), признак 1.
        """
        repr_ = self.config.input_repr
        coords, feats = [], []
        for b, scan in enumerate(scans):
            if repr_ == 'pointcloud':
                keep = scan.surface_mask(1.0)
            else:
                keep = np.abs(scan.d) < scan.truncation
            c = scan.coords[keep]
            coords.append(np.column_stack([np.full(len(c), b, dtype=np.int64), c]))
            feats.append(scan.d[keep] if repr_ == 'tsdf' else np.ones(len(c)))
        coords = np.concatenate(coords) if coords else np.zeros((0, 4), dtype=np.int64)
        if len(coords) == 0:
            raise InferenceError("Пустой вход: нет вокселей в полосе усечения")
        return SparseTensor.from_arrays(coords, np.concatenate(feats).reshape(-1, 1))

    def encode(self, x: SparseTensor) -> List[SparseTensor]:
        """Выходы стадий энкодера на шагах 2^1..2^L."""
        if len(x) == 0:
            raise InferenceError("Пустой вход энкодера")
        out = []
        for stage in self.encoder:
            x = stage(x)
            out.append(x)
        return out

    def coarse_predict(self, deepest: SparseTensor, batch_size: int):
        """
        Плотный уровень 0: бокс по самым грубым координатам с отступом 1.

        Returns:
            Кортеж (F_0, O_0, S_0) плотных тензоров (S_0 = None при выходе-занятости)
        """
        xyz = deepest.coords[:, 1:]
        lo = xyz.min(axis=0) - 1
        hi = xyz.max(axis=0) + 1
        dense = to_dense(deepest, lo, hi - lo + 1, fill=0.0, batch_size=batch_size)
        return self.coarse(dense)

    def level_zero(self, dense) -> LevelOutput:
        f0, o0, s0 = dense
        cset = dense_coords(f0)
        return LevelOutput(0, 2 ** self.config.levels, to_sparse(f0, cset), to_sparse(o0, cset),
                           to_sparse(s0, cset) if s0 is not None else None)

    def hierarchy_level(self, k: int, x_k: SparseTensor, skip: SparseTensor) -> LevelOutput:
        """Уровень k -> k+1: обработка, повышение разрешения, головы O и S."""
        module = self.hierarchy[k]
        stride = 2 ** (self.config.levels - k - 1)
        if len(x_k) == 0:
            return LevelOutput(k + 1, stride, _empty_sparse(module.cout), _empty_sparse(1),
                               _empty_sparse(1) if module.sdf_head is not None else None)
        f, o, s = module(x_k, skip)
        return LevelOutput(k + 1, stride, f, o, s)

    def refine_final(self, x_n: SparseTensor) -> SparseTensor:
        """Финальные значения на разрешении 1; при выходе-TSDF обрезаются до [-tau, tau]."""
        if len(x_n) == 0:
            return _empty_sparse(1)
        out = self.refiner(x_n)
        if self.config.predicts_sdf:
            tau = self.config.truncation
            out = F.clamp(out, -tau, tau)
        return out

    def forward(self, scans: Sequence[SparseTSDF], active_levels: Optional[int] = None,
                gate_hint: Optional[GateHint] = None) -> HierarchyOutput:
        """
        Прямой проход.

        Args:
            scans: Входные TSDF (образцы батча)
            active_levels: Число активных уровней (1..L), по умолчанию L
            gate_hint: При обучении добавляет к гейту строки уровня (см. GateHint)

        Returns:
            HierarchyOutput; финальный шаг и уточнение выполняются только при active_levels == L
        """
        L = self.config.levels
        active = L if active_levels is None else int(active_levels)
        if not 1 <= active <= L:
            raise ValueError(f"active_levels должно быть в [1, {L}], получено {active}")
        if isinstance(scans, SparseTSDF):
            scans = [scans]

        feats = self.encode(self.input_tensor(scans))
        dense = self.coarse_predict(feats[-1], len(scans))
        level = self.level_zero(dense)
        out = HierarchyOutput(active, [level], dense)

        n_steps = active - 1 + (1 if active == L else 0)
        for k in range(n_steps):
            extra = gate_hint(k, level.coords) if gate_hint is not None else None
            gated = sparsify_gate(level.occupancy, level.features, level.sdf, extra)
            level = self.hierarchy_level(k, gated, feats[L - k - 1])
            if level.index == L:
                out.final_level = level
            else:
                out.levels.append(level)

        if out.final_level is not None:
            fl = out.final_level
            extra = gate_hint(L, fl.coords) if gate_hint is not None else None
            out.final = self.refine_final(sparsify_gate(fl.occupancy, fl.features, fl.sdf, extra))
        return out

    __call__ = forward

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------

    def load_arrays(self, arrays) -> None:
        """
        Загружает параметры и буферы по именам (значения копируются на месте).

        Raises:
            KeyError: если имени нет в модели
            ValueError: если форма не совпадает
        """
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        for name, value in arrays.items():
            if name in params:
                target = params[name]
                if target.data.shape != np.shape(value):
                    raise ValueError(f"Форма {name}: {np.shape(value)} вместо {target.data.shape}")
                target.data = np.asarray(value, dtype=get_default_dtype()).copy()
            elif name in buffers:
                buf = buffers[name]
                if buf.shape != np.shape(value):
                    raise ValueError(f"Форма {name}: {np.shape(value)} вместо {buf.shape}")
                buf[:] = value
            else:
                raise KeyError(f"Неизвестный параметр {name}")


def complete_scan(model: SGNNModel, scan: SparseTSDF) -> SparseTSDF:
    """
    Завершение скана всеми уровнями в режиме оценки.

    При выходе-занятости логиты переводятся в TSDF
    d = clamp(tau * (1 - 2 sigmoid(logit)), -tau, tau), так что изоповерхность
    d = 0 соответствует вероятности 0.5.
    """
    model.eval()
    out = model.forward([scan])
    tau = model.config.truncation
    final = out.final
    values = final.features.data[:, 0].astype(np.float64)
    if not model.config.predicts_sdf:
        values = tau * (1.0 - 2.0 * F.stable_sigmoid(values))
    d = np.clip(values, -tau, tau)
    coords = final.coords[:, 1:]
    logger.info(f"Завершение: {len(scan)} записей на входе, {len(d)} на выходе")
    return SparseTSDF(coords, d, np.ones(len(d)), d > -tau, voxel_size=scan.voxel_size,
                      truncation=tau, validate=False)
