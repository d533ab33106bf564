# -*- coding: utf-8 -*-
"""trainer.py

Цикл прогрессивного обучения: выборка батчей кропов, прямой проход с
активными уровнями, маскированные потери, Adam, журнал потерь в CSV,
контрольные точки и возобновление.

Случайность каждой итерации выводится из (seed, итерация), поэтому батч
итерации можно восстановить без повторения предыдущих выборок.
"""
from __future__ import annotations

import csv
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigurationError, SamplingError
from model.config import ModelConfig
from model.sgnn import SGNNModel
from parsers.checkpoint_file import Checkpoint, read_checkpoint, write_checkpoint
from selfsup.pairs import ScanPair, crop_origins, random_crop_pair
from sparsenn.optim import adam_step, zero_grad
from sparsenn.tensor import backward
from stats.plots import plot_loss_curve
from training.config import TrainConfig
from training.targets import LevelTarget, gate_hint, level_targets, total_loss

logger = logging.getLogger('SGNN.Trainer')

LOSS_LOG_FILE = 'losses.csv'
LOSS_CURVE_FILE = 'loss_curve.png'
TRAIN_HEADER_PREFIX = 'train.'

Batch = List[Tuple[ScanPair, List[LevelTarget]]]


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}.ckpt"


def loss_columns(levels: int) -> List[str]:
    """Столбцы журнала потерь: итерация, уровни, сумма, слагаемые уровней 0..L, финал."""
    cols = ['iteration', 'active_levels', 'total']
    for k in range(levels + 1):
        cols += [f"occ_{k}", f"sdf_{k}"]
    cols.append('final')
    return cols


def model_to_checkpoint(model: SGNNModel, iteration: int,
                        train_cfg: Optional[TrainConfig] = None) -> Checkpoint:
    """Снимок модели: параметры, буферы batchnorm, моменты и шаги Adam."""
    header = model.config.to_header()
    if train_cfg is not None:
        header.update({TRAIN_HEADER_PREFIX + k: v for k, v in train_cfg.to_header().items()})
    ckpt = Checkpoint(header=header, iteration=int(iteration))
    ckpt.arrays = {name: np.array(value) for name, value in model.state_arrays().items()}
    for name, p in model.named_parameters():
        if p.m is not None:
            ckpt.moments[f"m:{name}"] = p.m
            ckpt.moments[f"v:{name}"] = p.v
        if p.step:
            ckpt.steps[name] = p.step
    return ckpt


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> SGNNModel:
    """Строит модель по заголовку контрольной точки и загружает её состояние."""
    model = SGNNModel(ModelConfig.from_header(ckpt.header), seed=seed)
    restore_state(model, ckpt)
    return model


def restore_state(model: SGNNModel, ckpt: Checkpoint) -> None:
    """
    Загружает в модель параметры, буферы и состояние Adam.

    Raises:
        ConfigurationError: если гиперпараметры в заголовке отличаются от модели
    """
    stored = ModelConfig.from_header(ckpt.header)
    if stored != model.config:
        raise ConfigurationError(f"Контрольная точка создана для другой модели: {stored}")
    model.load_arrays(ckpt.arrays)
    for name, p in model.named_parameters():
        p.reset_state()
        if f"m:{name}" in ckpt.moments:
            p.m = ckpt.moments[f"m:{name}"].astype(p.data.dtype)
            p.v = ckpt.moments[f"v:{name}"].astype(p.data.dtype)
        p.step = int(ckpt.steps.get(name, 0))


def load_checkpoint(path: Union[str, Path], seed: int = 0) -> SGNNModel:
    return model_from_checkpoint(read_checkpoint(path), seed=seed)


class Trainer:
    """
    Прогрессивное обучение SGNN на наборе пар.

    Args:
        pairs: Пары полного размера (кропы берутся на каждой итерации)
        model: Обучаемая модель
        cfg: Параметры обучения
        out_dir: Каталог журнала, контрольных точек и графика
        db: Необязательный реестр запусков (RunsDatabase)
        run_name: Имя запуска в реестре

    Raises:
        ValueError: если набор пар пуст
        SamplingError: если ни одна пара не допускает кроп нужного размера
    """

    def __init__(self, pairs: Sequence[ScanPair], model: SGNNModel, cfg: TrainConfig,
                 out_dir: Union[str, Path], db=None, run_name: Optional[str] = None):
        if not pairs:
            raise ValueError("Пустой набор пар для обучения")
        self.pairs = list(pairs)
        self.model = model
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.db = db
        self.run_name = run_name or self.out_dir.name
        self.start_iteration = 0
        self.history: List[Dict[str, float]] = []
        self.last_checkpoint: Optional[Path] = None

        self.origins = [crop_origins(p, cfg.crop, cfg.min_surface_voxels) for p in self.pairs]
        self.usable = [i for i, o in enumerate(self.origins) if len(o)]
        skipped = len(self.pairs) - len(self.usable)
        if skipped:
            logger.warning(f"Пропущено пар без допустимого кропа: {skipped}")
        if not self.usable:
            raise SamplingError(f"Ни одна из {len(self.pairs)} пар не допускает кроп {cfg.crop}")
        logger.info(f"Обучение на {len(self.usable)} парах, кроп {cfg.crop}, "
                    f"батч {cfg.batch_size}")

    # ------------------------------------------------------------------
    # Data
    # ------------------------------------------------------------------

    def pair_index(self, iteration: int, slot: int) -> int:
        """Индекс пары для позиции slot батча: перестановка пар на каждую эпоху."""
        n = len(self.usable)
        j = iteration * self.cfg.batch_size + slot
        perm = np.random.default_rng([self.cfg.seed, 1, j // n]).permutation(n)
        return self.usable[int(perm[j % n])]

    def batch_for(self, iteration: int) -> Batch:
        """
        Батч итерации: кропы пар и цели их уровней.

        Функция не зависит от предыдущих вызовов.

        Raises:
            SamplingError: если ни один образец батча не удалось построить
        """
        cfg = self.cfg
        levels = self.model.config.levels
        batch: Batch = []
        for b in range(cfg.batch_size):
            idx = self.pair_index(iteration, b)
            cropped = random_crop_pair(self.pairs[idx], cfg.crop, seed=[cfg.seed, 2, iteration, b],
                                       min_surface_voxels=cfg.min_surface_voxels,
                                       origins=self.origins[idx])
            if not np.any(np.abs(cropped.input.d) < cropped.input.truncation):
                logger.debug(f"Итерация {iteration}: пустой вход кропа пары {idx}, пропуск")
                continue
            batch.append((cropped, level_targets(cropped, levels)))
        if not batch:
            raise SamplingError(f"Итерация {iteration}: не удалось собрать батч")
        return batch

    def _batches(self, start: int, stop: int):
        cfg = self.cfg
        if cfg.prefetch <= 0 or cfg.deterministic:
            for it in range(start, stop):
                yield it, self.batch_for(it)
            return
        with ThreadPoolExecutor(max_workers=cfg.prefetch,
                                thread_name_prefix='sgnn-loader') as pool:
            pending: Deque = deque()
            nxt = start
            for it in range(start, stop):
                while nxt < stop and len(pending) <= cfg.prefetch:
                    pending.append(pool.submit(self.batch_for, nxt))
                    nxt += 1
                yield it, pending.popleft().result()

    # ------------------------------------------------------------------
    # Optimisation
    # ------------------------------------------------------------------

    def step(self, iteration: int, batch: Batch) -> Dict[str, float]:
        """Одна итерация: прямой проход, потеря, обратный проход, шаг Adam."""
        model = self.model
        active = self.cfg.active_levels(iteration, model.config.levels)
        targets = [t for _, t in batch]
        model.train()
        out = model.forward([p.input for p, _ in batch], active,
                            gate_hint(targets, self.cfg.use_mask))
        loss, terms = total_loss(out, targets, self.cfg, model.config)

        params = [p for name, p in model.named_parameters()
                  if model.activation_level(name) <= active]
        zero_grad(model.parameters())
        backward(loss)
        updated = adam_step(params, self.cfg.lr)
        logger.debug(f"Итерация {iteration}: потеря {terms['total']:.6f}, "
                     f"обновлено параметров {updated}")
        return dict(iteration=iteration, active_levels=active, **terms)

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def save_checkpoint(self, iteration: int) -> Path:
        path = self.out_dir / checkpoint_name(iteration)
        write_checkpoint(path, model_to_checkpoint(self.model, iteration, self.cfg))
        self.last_checkpoint = path
        return path

    def resume(self, path: Union[str, Path]) -> int:
        """
        Продолжение с контрольной точки: состояние модели, Adam и журнал потерь
        до сохранённой итерации.

        Returns:
            Номер итерации, с которой продолжится обучение
        """
        ckpt = read_checkpoint(path)
        restore_state(self.model, ckpt)
        self.start_iteration = ckpt.iteration
        self.history = [row for row in self._read_log() if row['iteration'] < ckpt.iteration]
        logger.info(f"Возобновление с итерации {ckpt.iteration} ({path})")
        return ckpt.iteration

    # ------------------------------------------------------------------
    # Loss log
    # ------------------------------------------------------------------

    def _read_log(self) -> List[Dict[str, float]]:
        path = self.out_dir / LOSS_LOG_FILE
        if not path.exists():
            return []
        rows = []
        with open(path, newline='', encoding='utf-8') as f:
            for raw in csv.DictReader(f):
                row: Dict[str, float] = {}
                for key, value in raw.items():
                    if value in (None, ''):
                        continue
                    row[key] = int(value) if key in ('iteration', 'active_levels') else float(value)
                rows.append(row)
        return rows

    @staticmethod
    def _format(value) -> str:
        return repr(float(value)) if isinstance(value, float) else str(value)

    def _write_log(self) -> None:
        path = self.out_dir / LOSS_LOG_FILE
        columns = loss_columns(self.model.config.levels)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=columns, restval='')
            writer.writeheader()
            for row in self.history:
                writer.writerow({k: self._format(v) for k, v in row.items() if k in columns})

    # ------------------------------------------------------------------
    # Loop
    # ------------------------------------------------------------------

    def run(self, iterations: Optional[int] = None) -> List[Dict[str, float]]:
        """
        Обучение до итерации iterations (по умолчанию cfg.iterations).

        Returns:
            Журнал потерь всех итераций, включая восстановленные при возобновлении
        """
        cfg = self.cfg
        stop = cfg.iterations if iterations is None else int(iterations)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        levels = self.model.config.levels
        run_id = None
        if self.db is not None:
            from parsers.config_file import ConfigFileParser  # отложенный импорт: цикл parsers <-> training
            run_id = self.db.start_run(self.run_name,
                                       ConfigFileParser.to_text(cfg, self.model.config),
                                       str(self.out_dir), self.start_iteration)

        columns = loss_columns(levels)
        log_path = self.out_dir / LOSS_LOG_FILE
        self._write_log()
        prev_active = None
        with open(log_path, 'a', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=columns, restval='')
            for it, batch in self._batches(self.start_iteration, stop):
                active = cfg.active_levels(it, levels)
                if active != prev_active:
                    logger.info(f"Итерация {it}: активных уровней {active} из {levels}")
                    prev_active = active
                row = self.step(it, batch)
                self.history.append(row)
                writer.writerow({k: self._format(v) for k, v in row.items() if k in columns})
                f.flush()
                if run_id is not None:
                    self.db.log_loss(run_id, it, active,
                                     {k: v for k, v in row.items()
                                      if k not in ('iteration', 'active_levels')})
                done = it + 1
                if cfg.checkpoint_every and done % cfg.checkpoint_every == 0 and done < stop:
                    self.save_checkpoint(done)

        final_iteration = max(stop, self.start_iteration)
        self.save_checkpoint(final_iteration)
        if self.history:
            plot_loss_curve(self.history, self.out_dir / LOSS_CURVE_FILE, cfg.n_level)
        if run_id is not None:
            self.db.finish_run(run_id, final_iteration)
        logger.info(f"Обучение завершено на итерации {final_iteration}")
        return self.history


def train(pairs: Sequence[ScanPair], model: SGNNModel, cfg: TrainConfig,
          out_dir: Union[str, Path], resume: Optional[Union[str, Path]] = None,
          db=None, run_name: Optional[str] = None) -> Trainer:
    """Обучает модель на парах; возвращает отработавший Trainer (журнал в .history)."""
    trainer = Trainer(pairs, model, cfg, out_dir, db=db, run_name=run_name)
    if resume is not None:
        trainer.resume(resume)
    trainer.run()
    return trainer
