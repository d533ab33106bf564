# -*- coding: utf-8 -*-
"""Фикстуры тестов: маленькие сцены, кадры и пары."""

import logging

import numpy as np
import pytest

from fusion.integrator import FusionConfig, fuse
from helpers import corner_scene, orbit_frames
from selfsup.pairs import build_pair

logging.getLogger('SGNN').setLevel(logging.WARNING)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def scene():
    return corner_scene()


@pytest.fixture(scope='session')
def frames(scene):
    return orbit_frames(scene, 6)


@pytest.fixture(scope='session')
def fusion_cfg():
    return FusionConfig(voxel_size=0.04, truncation=3.0)


@pytest.fixture(scope='session')
def fused(frames, fusion_cfg):
    return fuse(frames, fusion_cfg)


@pytest.fixture(scope='session')
def pair(frames, fusion_cfg):
    return build_pair(frames, 0.5, 1.0, fusion_cfg, seed=3)
