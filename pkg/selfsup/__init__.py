"""Построение самообучающих пар (вход, цель, маска)."""

from selfsup.pairs import (
    ScanPair, subsample_frames, build_pair, crop_origins, crop_pair,
    random_crop_pair, crops_baseline_pair,
)

__all__ = [
    'ScanPair', 'subsample_frames', 'build_pair', 'crop_origins', 'crop_pair',
    'random_crop_pair', 'crops_baseline_pair',
]
