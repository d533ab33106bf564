# -*- coding: utf-8 -*-
"""Тесты файловых форматов: TSDF, кадры, сцены, пары, конфиг, контрольные точки, PLY."""

import numpy as np
import pytest

from errors import ConfigurationError, FormatError
from grid.voxels import SparseTSDF, VoxelSet
from meshing import TriangleMesh
from model import ModelConfig
from parsers.checkpoint_file import (Checkpoint, checkpoint_from_bytes, checkpoint_to_bytes,
                                     read_checkpoint, write_checkpoint)
from parsers.config_file import ConfigFileParser
from parsers.depth_file import list_frame_files, read_depth_frame, read_frames_dir, write_depth_frame
from parsers.pair_dir import list_pair_dirs, read_pair, read_pairs, write_pair
from parsers.ply_file import PlyParser, mesh_to_text, read_ply, write_ply
from parsers.scene_file import SceneFileParser
from parsers.tsdf_file import (read_mask, read_tsdf, tsdf_from_bytes, tsdf_to_bytes, write_mask,
                               write_tsdf)
from scenes.primitives import make_room_scene
from selfsup.pairs import ScanPair
from training import TrainConfig


def small_tsdf():
    return SparseTSDF([[3, -2, 1], [0, 0, 0], [-7, 4, 100]], [0.5, -1.25, -3.0], [1, 2, 3],
                      [True, True, False], voxel_size=0.04)


class TestTsdfFile:

    def test_round_trip(self, tmp_path):
        s = small_tsdf()
        write_tsdf(tmp_path / 'a.tsdf', s)
        back = read_tsdf(tmp_path / 'a.tsdf')
        assert back.same_entries(s)
        assert back.voxel_size == pytest.approx(0.04)
        assert back.truncation == 3.0

    def test_bytes_do_not_depend_on_insertion_order(self):
        s = small_tsdf()
        shuffled = SparseTSDF(s.coords[::-1], s.d[::-1], s.w[::-1], s.observed[::-1],
                              voxel_size=0.04)
        assert tsdf_to_bytes(s) == tsdf_to_bytes(shuffled)

    def test_empty(self):
        assert len(tsdf_from_bytes(tsdf_to_bytes(SparseTSDF.empty()))) == 0

    def test_corrupt_data(self):
        data = tsdf_to_bytes(small_tsdf())
        with pytest.raises(FormatError):
            tsdf_from_bytes(b'XXXX' + data[4:])
        with pytest.raises(FormatError):
            tsdf_from_bytes(data[:-3])
        with pytest.raises(FormatError):
            tsdf_from_bytes(data[:12])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_tsdf(tmp_path / 'none.tsdf')

    def test_mask_round_trip(self, tmp_path):
        mask = VoxelSet([[1, 2, 3], [-1, 0, 0]])
        write_mask(tmp_path / 'm.tsdf', mask, 0.02, 3.0)
        assert read_mask(tmp_path / 'm.tsdf') == mask


class TestDepthFile:

    def test_round_trip(self, frames, tmp_path):
        for i, frame in enumerate(frames[:2]):
            write_depth_frame(tmp_path / f'frame_{i:04d}.dep', frame)
        (tmp_path / 'notes.txt').write_text('x')
        files = list_frame_files(tmp_path)
        assert [f.name for f in files] == ['frame_0000.dep', 'frame_0001.dep']
        back = read_frames_dir(tmp_path)
        for a, b in zip(frames, back):
            assert np.allclose(a.depths, b.depths, rtol=1e-6)
            assert np.allclose(a.pose, b.pose, atol=1e-6)
            assert b.intrinsics.width == a.intrinsics.width

    def test_truncated_frame(self, frames, tmp_path):
        path = tmp_path / 'f.dep'
        write_depth_frame(path, frames[0])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_depth_frame(path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_frame_files(tmp_path / 'nope')


class TestSceneFile:

    def test_round_trip(self, tmp_path):
        scene = make_room_scene(4)
        parser = SceneFileParser()
        parser.write_file(tmp_path / 'scene.txt', scene)
        back = parser.parse_file(tmp_path / 'scene.txt')
        pts = np.random.default_rng(1).uniform(-1, 7, size=(200, 3))
        assert np.allclose(scene.sdf(pts), back.sdf(pts), atol=1e-12)
        assert np.array_equal(back.extent_max, scene.extent_max)

    def test_comments_and_defaults(self):
        scene = SceneFileParser().parse_text("# комментарий\n\nsphere 0 0 0 .5\nplane 0 0 1 -1e0\n")
        assert len(scene.primitives) == 2
        assert scene.extent_max.tolist() == [6.0, 6.0, 6.0]

    @pytest.mark.parametrize('line', ['cone 1 2 3', 'box 1 2 3', 'sphere 0 0 0 a'])
    def test_bad_lines(self, line):
        with pytest.raises(FormatError):
            SceneFileParser().parse_text(line)


class TestPairDir:

    def test_round_trip(self, tmp_path):
        target = small_tsdf()
        pair = ScanPair.from_scans(target.select(np.array([True, False, False])), target)
        write_pair(tmp_path / 'scene_000', pair)
        write_pair(tmp_path / 'scene_001', pair)
        back = read_pair(tmp_path / 'scene_000')
        assert back.input.same_entries(pair.input)
        assert back.target.same_entries(pair.target)
        assert back.mask == pair.mask
        assert [p.name for p in list_pair_dirs(tmp_path)] == ['scene_000', 'scene_001']
        assert list_pair_dirs(tmp_path / 'scene_001') == [tmp_path / 'scene_001']
        assert len(read_pairs(tmp_path)) == 2

    def test_mask_survives_rounding_near_truncation(self, tmp_path):
        target = SparseTSDF([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [-3.0 + 1e-9, 0.25, -3.0],
                            observed=[True, True, False])
        pair = ScanPair.from_scans(target.select(np.array([False, True, False])), target)
        assert len(pair.mask) == 2
        write_pair(tmp_path, pair)
        back = read_pair(tmp_path)
        assert back.check_mask()
        assert back.mask == pair.mask
        assert back.target.get((0, 0, 0)).d > -3.0

    def test_stale_mask_is_recomputed(self, tmp_path):
        target = small_tsdf()
        pair = ScanPair.from_scans(target, target)
        write_pair(tmp_path, pair)
        write_mask(tmp_path / 'mask.tsdf', VoxelSet([[9, 9, 9]]), 0.04, 3.0)
        assert read_pair(tmp_path).mask == pair.mask


CONFIG_TEXT = """
# модель
levels = 2
base_width=8
output_repr = occupancy   # выход-занятость

lr=0.005
batch_size=4
crop=32,32,64
use_mask=false
deterministic=yes
"""


class TestConfigFile:

    def test_parse(self):
        train_cfg, model_cfg = ConfigFileParser().parse_text(CONFIG_TEXT)
        assert model_cfg == ModelConfig(levels=2, base_width=8, output_repr='occupancy')
        assert train_cfg.lr == 0.005
        assert train_cfg.crop == (32, 32, 64)
        assert train_cfg.use_mask is False and train_cfg.deterministic is True
        assert train_cfg.iterations == TrainConfig().iterations

    def test_to_text_round_trip(self):
        train_cfg = TrainConfig(lr=0.02, crop=(8, 8, 16), use_mask=False)
        model_cfg = ModelConfig(levels=4, input_repr='pointcloud')
        text = ConfigFileParser.to_text(train_cfg, model_cfg)
        assert ConfigFileParser().parse_text(text) == (train_cfg, model_cfg)

    @pytest.mark.parametrize('text', ['levels=2\nlevels=3', 'speed=1', 'lr=fast',
                                      'crop=1,2', 'use_mask=maybe', 'just text',
                                      'levels=0', 'input_repr=mesh'])
    def test_rejects_bad_config(self, text):
        with pytest.raises(ConfigurationError):
            ConfigFileParser().parse_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ConfigFileParser().parse_file(tmp_path / 'train.cfg')


class TestCheckpointFile:

    def make(self):
        return Checkpoint(header={'levels': '2', 'note': 'a=b'},
                          arrays={'w': np.arange(6, dtype=np.float32).reshape(2, 3),
                                  's': np.array(1.5, dtype=np.float32)},
                          moments={'m:w': np.ones((2, 3), dtype=np.float32)},
                          steps={'w': 7}, iteration=123)

    def test_round_trip(self, tmp_path):
        ckpt = self.make()
        write_checkpoint(tmp_path / 'c.ckpt', ckpt)
        back = read_checkpoint(tmp_path / 'c.ckpt')
        assert back.header == ckpt.header
        assert back.iteration == 123 and back.steps == {'w': 7}
        assert np.array_equal(back.arrays['w'], ckpt.arrays['w'])
        assert back.arrays['s'].shape == ()
        assert np.array_equal(back.moments['m:w'], ckpt.moments['m:w'])
        assert checkpoint_to_bytes(back) == checkpoint_to_bytes(ckpt)

    def test_corrupt(self):
        data = checkpoint_to_bytes(self.make())
        with pytest.raises(FormatError):
            checkpoint_from_bytes(data + b'\x00')
        with pytest.raises(FormatError):
            checkpoint_from_bytes(data[:-4])
        with pytest.raises(FormatError):
            checkpoint_from_bytes(b'PK' + data)


class TestPly:

    def test_round_trip(self, tmp_path):
        mesh = TriangleMesh([[0.1, 0.2, 0.3], [1.0, 0.0, 0.0], [0.0, 1.0, -0.5]], [[0, 1, 2]])
        write_ply(tmp_path / 'm.ply', mesh)
        back = read_ply(tmp_path / 'm.ply')
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.triangles, mesh.triangles)

    def test_empty_mesh(self):
        back = PlyParser().parse_text(mesh_to_text(TriangleMesh()))
        assert back.is_empty and len(back.vertices) == 0

    @pytest.mark.parametrize('text', [
        'solid x\n',
        'ply\nformat binary_little_endian 1.0\nend_header\n',
        'ply\nformat ascii 1.0\nelement vertex 1\nend_header\n',
        'ply\nformat ascii 1.0\nelement vertex 4\nelement face 1\nend_header\n'
        '0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n',
        'ply\nformat ascii 1.0\nelement vertex 1\n',
    ])
    def test_rejects_bad_files(self, text):
        with pytest.raises(FormatError):
            PlyParser().parse_text(text)
