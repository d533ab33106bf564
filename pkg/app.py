#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
SGNN - самообучаемое завершение 3D-сканов

Основной модуль запуска. Командная строка конвейера:

1. gen-data  - синтетические комнаты и отрендеренные кадры глубины
2. fuse      - слияние кадров в разреженный TSDF
3. pairs     - пары (более неполный вход, менее неполная цель) с маской
4. train     - прогрессивное обучение модели
5. complete  - завершение скана обученной моделью
6. mesh      - извлечение сетки marching cubes в PLY
7. eval      - маскированные l1-метрики и полнота завершения

Коды выхода: 0 - успех, 2 - ошибка аргументов, 1 - ошибка выполнения.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from db.database import DatabaseManager, RunsDatabase
from fusion.integrator import FusionConfig, fuse
from grid.voxels import CropSpec, DEFAULT_TRUNCATION, DEFAULT_VOXEL_SIZE
from meshing.marching import marching_cubes
from model.sgnn import SGNNModel, complete_scan
from parsers.config_file import ConfigFileParser
from parsers.depth_file import list_frame_files, read_frames_dir, write_depth_frame
from parsers.pair_dir import list_pair_dirs, read_pair, write_pair
from parsers.ply_file import write_ply
from parsers.scene_file import SceneFileParser
from parsers.tsdf_file import read_tsdf, write_tsdf
from scenes.camera import CameraIntrinsics, render_depth, sample_trajectory
from scenes.primitives import make_room_scene
from selfsup.pairs import build_pair, crops_baseline_pair, subsample_frames
from stats.metrics import MetricsReport, completion_recall, l1_metrics
from stats.plots import plot_metrics
from training.trainer import load_checkpoint, train

SCENE_FILE = 'scene.txt'
FRAMES_DIR = 'frames'

logger = logging.getLogger('SGNN')


class ArgumentValidationError(ValueError):
    """Недопустимое значение аргумента командной строки."""


# Настройка логирования
def setup_logging(log_dir: str = 'logs', verbose: bool = False) -> logging.Logger:
    """Настраивает систему логирования приложения"""
    # Создаем папку для логов, если она не существует
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'sgnn.log'), encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )
    return logging.getLogger('SGNN')


def _validated(factory: Callable, *args, **kwargs):
    """Создаёт объект конфигурации; ValueError превращается в ошибку аргументов."""
    try:
        return factory(*args, **kwargs)
    except ValueError as e:
        raise ArgumentValidationError(str(e)) from e


def _scene_dirs(root: Path) -> List[Path]:
    """Каталоги сцен: сам root, если в нём есть frames/ или кадры, иначе его подкаталоги."""
    if not root.is_dir():
        raise ArgumentValidationError(f"Каталог не найден: {root}")
    if (root / FRAMES_DIR).is_dir() or list(root.glob('*.dep')):
        return [root]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / FRAMES_DIR).is_dir())
    if not dirs:
        raise ArgumentValidationError(f"В {root} нет кадров глубины")
    return dirs


def _frames_of(scene_dir: Path):
    frames_dir = scene_dir / FRAMES_DIR if (scene_dir / FRAMES_DIR).is_dir() else scene_dir
    return read_frames_dir(frames_dir)


# ---------------------------------------------------------------------------
# Команды
# ---------------------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.scenes < 1 or args.frames < 1:
        raise ArgumentValidationError("--scenes и --frames должны быть >= 1")
    intr = _validated(CameraIntrinsics.from_fov, args.width, args.height, args.fov)
    out = Path(args.out)
    parser = SceneFileParser()
    for i in range(args.scenes):
        scene_dir = out / f"scene_{i:03d}"
        scene = make_room_scene([args.seed, i])
        parser.write_file(scene_dir / SCENE_FILE, scene)
        poses = sample_trajectory(scene, args.frames, [args.seed, i, 1])
        for j, pose in enumerate(poses):
            write_depth_frame(scene_dir / FRAMES_DIR / f"frame_{j:04d}.dep",
                              render_depth(scene, pose, intr))
        logger.info(f"Сцена {scene_dir.name}: {len(poses)} кадров")
    return 0


def cmd_fuse(args: argparse.Namespace) -> int:
    cfg = _validated(FusionConfig, args.voxel_size, args.truncation)
    frames_dir = Path(args.frames)
    if not list_frame_files(frames_dir):
        raise ArgumentValidationError(f"В {frames_dir} нет файлов кадров")
    tsdf = fuse(read_frames_dir(frames_dir), cfg)
    write_tsdf(args.out, tsdf)
    return 0


def cmd_pairs(args: argparse.Namespace) -> int:
    cfg = _validated(FusionConfig, args.voxel_size, args.truncation)
    if not 0 < args.input_frac <= args.target_frac <= 1:
        raise ArgumentValidationError("Ожидалось 0 < --input-frac <= --target-frac <= 1")
    scene_dirs = _scene_dirs(Path(args.frames))
    out = Path(args.out)
    for i, scene_dir in enumerate(scene_dirs):
        frames = _frames_of(scene_dir)
        if args.crops_baseline:
            target = fuse(subsample_frames(frames, args.target_frac, [args.seed, i, 0]), cfg)
            pair = crops_baseline_pair(target, [args.seed, i, 2])
        else:
            pair = build_pair(frames, args.input_frac, args.target_frac, cfg, [args.seed, i])
        name = scene_dir.name if len(scene_dirs) > 1 else 'pair'
        write_pair(out / name, pair)
        logger.info(f"Пара {name}: вход {len(pair.input)}, цель {len(pair.target)}, "
                    f"маска {len(pair.mask)}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    try:
        train_cfg, model_cfg = ConfigFileParser().parse_file(args.config)
    except (ValueError, FileNotFoundError) as e:
        raise ArgumentValidationError(str(e)) from e
    try:
        pair_dirs = list_pair_dirs(args.pairs)
    except FileNotFoundError as e:
        raise ArgumentValidationError(str(e)) from e
    if not pair_dirs:
        raise ArgumentValidationError(f"В {args.pairs} нет пар")
    pairs = [read_pair(d) for d in pair_dirs]

    model = SGNNModel(model_cfg, seed=train_cfg.seed)
    db = None
    if args.db:
        manager = DatabaseManager()
        manager.connect(args.db)
        db = RunsDatabase(manager)
    try:
        train(pairs, model, train_cfg, args.out, resume=args.resume, db=db, run_name=args.name)
    finally:
        if db is not None:
            db.db_manager.close()
    return 0


def cmd_complete(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    scan = read_tsdf(args.input)
    write_tsdf(args.out, complete_scan(model, scan))
    return 0


def cmd_mesh(args: argparse.Namespace) -> int:
    write_ply(args.out, marching_cubes(read_tsdf(args.input)))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    pred = read_tsdf(args.pred)
    target = read_tsdf(args.target)
    input_scan = read_tsdf(args.input) if args.input else None
    if args.box:
        box = _validated(CropSpec.parse, args.box)
    else:
        box = CropSpec.covering(target)
    report = _validated(l1_metrics, pred, target, box, input_scan)
    if args.scene:
        if input_scan is None:
            raise ArgumentValidationError("--scene требует --input")
        scene = SceneFileParser().parse_file(args.scene)
        report.completion_recall = completion_recall(pred, scene, input_scan, box=box)

    print(MetricsReport.csv_header())
    print(report.csv_row())
    print(report.table())

    if args.plot:
        plot_metrics({args.label or Path(args.pred).stem: report}, args.plot)
    if args.db:
        manager = DatabaseManager()
        manager.connect(args.db)
        try:
            RunsDatabase(manager).save_metrics(args.label or Path(args.pred).stem, report)
        finally:
            manager.close()
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    'gen-data': cmd_gen_data,
    'fuse': cmd_fuse,
    'pairs': cmd_pairs,
    'train': cmd_train,
    'complete': cmd_complete,
    'mesh': cmd_mesh,
    'eval': cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sgnn',
                                     description='Самообучаемое завершение 3D-сканов')
    parser.add_argument('--log-dir', default='logs', help='Каталог файла журнала')
    parser.add_argument('--verbose', action='store_true', help='Подробный журнал (DEBUG)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-data', help='Синтетические сцены и кадры глубины')
    p.add_argument('--scenes', type=int, default=2, help='Число сцен')
    p.add_argument('--frames', type=int, default=24, help='Кадров на сцену')
    p.add_argument('--seed', type=int, default=0, help='Зерно генератора')
    p.add_argument('--width', type=int, default=80, help='Ширина кадра, пикселей')
    p.add_argument('--height', type=int, default=60, help='Высота кадра, пикселей')
    p.add_argument('--fov', type=float, default=60.0, help='Горизонтальный угол обзора, градусов')
    p.add_argument('--out', required=True, help='Выходной каталог')

    p = sub.add_parser('fuse', help='Слияние кадров в TSDF')
    p.add_argument('--frames', required=True, help='Каталог кадров *.dep')
    p.add_argument('--voxel-size', type=float, default=DEFAULT_VOXEL_SIZE, help='Размер вокселя, м')
    p.add_argument('--truncation', type=float, default=DEFAULT_TRUNCATION,
                   help='Усечение, вокселей')
    p.add_argument('--out', required=True, help='Выходной файл .tsdf')

    p = sub.add_parser('pairs', help='Пары для самообучения')
    p.add_argument('--frames', required=True,
                   help='Каталог кадров или каталог gen-data со сценами')
    p.add_argument('--input-frac', type=float, default=0.5, help='Доля кадров входа')
    p.add_argument('--target-frac', type=float, default=1.0, help='Доля кадров цели')
    p.add_argument('--seed', type=int, default=0, help='Зерно выборки кадров')
    p.add_argument('--voxel-size', type=float, default=DEFAULT_VOXEL_SIZE, help='Размер вокселя, м')
    p.add_argument('--truncation', type=float, default=DEFAULT_TRUNCATION,
                   help='Усечение, вокселей')
    p.add_argument('--crops-baseline', action='store_true',
                   help='Вход = цель без случайных боксов вместо удаления кадров')
    p.add_argument('--out', required=True, help='Выходной каталог пар')

    p = sub.add_parser('train', help='Обучение модели')
    p.add_argument('--pairs', required=True, help='Каталог пар')
    p.add_argument('--config', required=True, help='Файл конфигурации key=value')
    p.add_argument('--out', required=True, help='Каталог журнала и контрольных точек')
    p.add_argument('--resume', default=None, help='Контрольная точка для продолжения')
    p.add_argument('--db', default=None, help='База SQLite реестра запусков')
    p.add_argument('--name', default=None, help='Имя запуска в реестре')

    p = sub.add_parser('complete', help='Завершение скана')
    p.add_argument('--checkpoint', required=True, help='Файл контрольной точки')
    p.add_argument('--in', dest='input', required=True, help='Входной .tsdf')
    p.add_argument('--out', required=True, help='Выходной .tsdf')

    p = sub.add_parser('mesh', help='Сетка marching cubes')
    p.add_argument('--in', dest='input', required=True, help='Входной .tsdf')
    p.add_argument('--out', required=True, help='Выходной .ply')

    p = sub.add_parser('eval', help='Метрики завершения')
    p.add_argument('--pred', required=True, help='Предсказанный .tsdf')
    p.add_argument('--target', required=True, help='Целевой .tsdf')
    p.add_argument('--input', default=None, help='Входной .tsdf (область ненаблюдаемого)')
    p.add_argument('--box', default=None, help='Бокс x,y,z,dx,dy,dz (по умолчанию вся цель)')
    p.add_argument('--scene', default=None, help='Файл сцены для полноты завершения')
    p.add_argument('--label', default=None, help='Метка результата')
    p.add_argument('--plot', default=None, help='PNG с диаграммой метрик')
    p.add_argument('--db', default=None, help='База SQLite для сохранения метрик')
    return parser


# Основная точка входа
def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Разбирает аргументы и выполняет команду.

    Returns:
        Код выхода
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_dir, args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ArgumentValidationError as e:
        logger.error(f"Ошибка аргументов: {str(e)}")
        parser.print_usage(sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Критическая ошибка: {str(e)}", exc_info=True)
        return 1


# Точка входа при запуске скрипта
if __name__ == "__main__":
    sys.exit(main())
