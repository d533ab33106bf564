# -*- coding: utf-8 -*-
"""pair_dir.py

Каталог пары: input.tsdf, target.tsdf и mask.tsdf (маска в формате TSDF,
записи = координаты маски).
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Union

from parsers.tsdf_file import read_mask, read_tsdf, write_mask, write_tsdf
from selfsup.pairs import ScanPair

logger = logging.getLogger('SGNN.Parsers')

INPUT_FILE = 'input.tsdf'
TARGET_FILE = 'target.tsdf'
MASK_FILE = 'mask.tsdf'


def write_pair(directory: Union[str, Path], pair: ScanPair) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tsdf(directory / INPUT_FILE, pair.input)
    write_tsdf(directory / TARGET_FILE, pair.target)
    write_mask(directory / MASK_FILE, pair.mask, pair.target.voxel_size, pair.target.truncation)
    return directory


def read_pair(directory: Union[str, Path]) -> ScanPair:
    """
    Загружает пару; маска, не совпадающая с наблюдаемой областью цели,
    заменяется пересчитанной.
    """
    directory = Path(directory)
    pair = ScanPair(read_tsdf(directory / INPUT_FILE), read_tsdf(directory / TARGET_FILE),
                    read_mask(directory / MASK_FILE))
    if not pair.check_mask():
        logger.warning(f"{directory}: маска не совпадает с d > -tau цели, пересчитана")
        pair = ScanPair.from_scans(pair.input, pair.target)
    return pair


def list_pair_dirs(root: Union[str, Path]) -> List[Path]:
    """Подкаталоги root, содержащие target.tsdf, в лексикографическом порядке."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"Каталог пар не найден: {root}")
    if (root / TARGET_FILE).exists():
        return [root]
    return sorted(p.parent for p in root.glob(f'*/{TARGET_FILE}'))


def read_pairs(root: Union[str, Path]) -> List[ScanPair]:
    pairs = [read_pair(d) for d in list_pair_dirs(root)]
    logger.info(f"Загружено {len(pairs)} пар из {root}")
    return pairs
