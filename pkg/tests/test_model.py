# -*- coding: utf-8 -*-
"""Тесты архитектуры: гейт, уровни иерархии, состояние модели."""

import numpy as np
import pytest

from errors import ConfigurationError, InferenceError
from grid.voxels import SparseTSDF
from helpers import analytic_tsdf
from model import ModelConfig, SGNNModel, complete_scan, sparsify_gate
from scenes.primitives import Sphere
from sparsenn.functional import stable_sigmoid
from sparsenn.sparse import SparseTensor


@pytest.fixture(scope='module')
def sphere_scan():
    return analytic_tsdf(Sphere((0.32, 0.3, 0.34), 0.2).sdf, (0, 0, 0), (16, 16, 16), 0.04)


@pytest.fixture
def small_model():
    return SGNNModel(ModelConfig(levels=2, base_width=4), seed=1)


def children_of(parents: np.ndarray, children: np.ndarray) -> bool:
    up = children.copy()
    up[:, 1:] = np.floor_divide(up[:, 1:], 2)
    keys = {tuple(r) for r in parents.tolist()}
    return all(tuple(r) in keys for r in up.tolist())


class TestGate:

    def _level(self, logits):
        coords = np.array([[0, i, 0, 0] for i in range(len(logits))])
        occ = SparseTensor.from_arrays(coords, np.array(logits).reshape(-1, 1))
        feats = SparseTensor.from_arrays(coords, np.arange(2 * len(logits)).reshape(-1, 2))
        sdf = SparseTensor.from_arrays(coords, np.full((len(logits), 1), 0.5))
        return occ, feats, sdf

    def test_zero_logit_is_dropped(self):
        occ, feats, sdf = self._level([-1.0, 0.0, 1e-6, 2.0])
        out = sparsify_gate(occ, feats, sdf)
        assert out.coords[:, 1].tolist() == [2, 3]
        assert out.channels == 4
        assert out.features.data[1].tolist() == pytest.approx([6.0, 7.0, 2.0, 0.5])

    def test_extra_rows_are_added(self):
        occ, feats, _ = self._level([-1.0, -2.0, 3.0])
        out = sparsify_gate(occ, feats, None, extra=np.array([True, False, False]))
        assert out.coords[:, 1].tolist() == [0, 2]
        assert out.channels == 3


class TestForward:

    def test_levels_and_strides(self, small_model, sphere_scan):
        out = small_model.forward([sphere_scan])
        assert out.active_levels == 2
        assert [lv.index for lv in out.levels] == [0, 1]
        assert [lv.stride for lv in out.levels] == [4, 2]
        assert out.final_level.stride == 1
        assert out.final.channels == 1
        assert np.all(np.abs(out.final.features.data) <= 3.0)
        for lv in out.levels + [out.final_level]:
            assert len(lv.occupancy) == len(lv.features) == len(lv.sdf)

    def test_children_come_from_gated_parents(self, small_model, sphere_scan):
        out = small_model.forward([sphere_scan], gate_hint=lambda k, c: np.ones(len(c), bool))
        lv0, lv1 = out.levels
        assert len(lv1) == 8 * len(lv0)
        assert len(out.final_level) == 8 * len(lv1)
        assert children_of(lv1.coords, out.final_level.coords)

    def test_gate_drops_negative_parents(self, small_model, sphere_scan):
        out = small_model.forward([sphere_scan])
        lv0, lv1 = out.levels
        kept = lv0.coords[lv0.occupancy.features.data[:, 0] > 0]
        assert len(lv1) == 8 * len(kept)
        assert children_of(kept, lv1.coords)

    def test_partial_activation(self, small_model, sphere_scan):
        out = small_model.forward([sphere_scan], active_levels=1)
        assert len(out.levels) == 1
        assert out.final_level is None and out.final is None
        with pytest.raises(ValueError):
            small_model.forward([sphere_scan], active_levels=3)

    def test_batch_of_two(self, small_model, sphere_scan):
        out = small_model.forward([sphere_scan, sphere_scan.translated((4, 0, 0))])
        assert set(out.levels[0].coords[:, 0].tolist()) == {0, 1}

    def test_empty_input_raises(self, small_model):
        with pytest.raises(InferenceError):
            small_model.forward([SparseTSDF.empty()])

    def test_translation_equivariance_in_eval(self, small_model, sphere_scan):
        small_model.eval()
        a = small_model.forward([sphere_scan])
        b = small_model.forward([sphere_scan.translated((4, -8, 12))])
        assert np.array_equal(a.final.coords[:, 1:] + [4, -8, 12], b.final.coords[:, 1:])
        assert np.array_equal(a.final.features.data, b.final.features.data)

    @pytest.mark.parametrize('repr_', ['occupancy', 'pointcloud'])
    def test_input_representations(self, sphere_scan, repr_):
        model = SGNNModel(ModelConfig(levels=2, base_width=4, input_repr=repr_), seed=0)
        x = model.input_tensor([sphere_scan])
        assert np.all(x.features.data == 1.0)
        if repr_ == 'pointcloud':
            assert len(x) == int(sphere_scan.surface_mask(1.0).sum())
        model.forward([sphere_scan])


class TestCompletion:

    def test_tsdf_output(self, small_model, sphere_scan):
        result = complete_scan(small_model, sphere_scan)
        assert not small_model.training
        assert result.voxel_size == sphere_scan.voxel_size
        assert np.all(np.abs(result.d) <= 3.0)
        assert np.array_equal(result.observed, result.d > -3.0)

    def test_occupancy_output_is_converted(self, sphere_scan):
        model = SGNNModel(ModelConfig(levels=2, base_width=4, output_repr='occupancy'), seed=2)
        assert model.hierarchy[0].sdf_head is None
        result = complete_scan(model, sphere_scan)
        logits = model.forward([sphere_scan]).final.features.data[:, 0].astype(np.float64)
        expected = np.clip(3.0 * (1 - 2 * stable_sigmoid(logits)), -3.0, 3.0)
        assert np.allclose(result.d, expected)


class TestState:

    def test_load_arrays_reproduces_outputs(self, small_model, sphere_scan):
        other = SGNNModel(small_model.config, seed=99)
        other.load_arrays(small_model.state_arrays())
        small_model.eval()
        other.eval()
        a = small_model.forward([sphere_scan]).final.features.data
        b = other.forward([sphere_scan]).final.features.data
        assert np.array_equal(a, b)

    def test_load_arrays_rejects_unknown_and_bad_shape(self, small_model):
        with pytest.raises(KeyError):
            small_model.load_arrays({'nope': np.zeros(1)})
        name, p = next(iter(small_model.named_parameters()))
        with pytest.raises(ValueError):
            small_model.load_arrays({name: np.zeros(p.data.size + 1)})

    def test_activation_levels(self):
        model = SGNNModel(ModelConfig(levels=3, base_width=2))
        assert model.activation_level('encoder.0.conv1.conv.weight') == 1
        assert model.activation_level('coarse.occ_head.weight') == 1
        assert model.activation_level('hierarchy.0.conv1.conv.weight') == 2
        assert model.activation_level('hierarchy.1.up.conv.weight') == 3
        assert model.activation_level('hierarchy.2.occ_head.weight') == 3
        assert model.activation_level('refiner.head.weight') == 3
        names = [n for n, _ in model.named_parameters()]
        assert all(n.split('.')[0] in ('encoder', 'coarse', 'hierarchy', 'refiner')
                   for n in names)


class TestModelConfig:

    def test_widths(self):
        cfg = ModelConfig(levels=3, base_width=8)
        assert [cfg.width(i) for i in range(4)] == [8, 8, 16, 32]

    def test_header_round_trip(self):
        cfg = ModelConfig(levels=2, base_width=5, output_repr='occupancy')
        assert ModelConfig.from_header(cfg.to_header()) == cfg

    @pytest.mark.parametrize('kwargs', [{'levels': 0}, {'base_width': 0},
                                        {'input_repr': 'mesh'}, {'output_repr': 'sdf'},
                                        {'truncation': -1.0}])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigurationError):
            ModelConfig(**kwargs)

    def test_header_missing_key(self):
        with pytest.raises(ConfigurationError):
            ModelConfig.from_header({'levels': '2'})
