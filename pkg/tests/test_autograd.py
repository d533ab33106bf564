# -*- coding: utf-8 -*-
"""Тесты автодифференцирования и свёрток sparsenn."""

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from errors import ShapeError, UsageError
from grid.voxels import SparseTSDF, VoxelSet
from helpers import numeric_grad, relative_error
from sparsenn import functional as F
from sparsenn.functional import stable_sigmoid
from sparsenn.layers import BatchNorm, ConvBNReLU, SubmConv3
from sparsenn.losses import (bce_logits, bce_logits_values, log_transform, masked_l1,
                             masked_l1_logtsdf)
from sparsenn.optim import Parameter, adam_step, zero_grad
from sparsenn.sparse import (DenseTensor, SparseTensor, dense_conv3, skip_concat,
                             sparse_downconv2, sparse_upsample2, subm_conv3, to_dense, to_sparse)
from sparsenn.tensor import Tensor, backward, get_default_dtype, make_result, precision

GRAD_TOL = 1e-6


def weighted_sum(t: Tensor, r: np.ndarray) -> Tensor:
    return make_result(np.array((t.data * r).sum()), [t], lambda g: t.accumulate(g * r))


def random_coords(rng, n, extent=5, batches=2):
    pool = np.array(list(itertools.product(range(batches), range(extent), range(extent),
                                           range(extent))))
    return pool[np.sort(rng.choice(len(pool), size=n, replace=False))]


def rows_by_coord(x: SparseTensor):
    return {tuple(int(v) for v in c): x.features.data[i] for i, c in enumerate(x.coords)}


def check_grad(loss_fn, *arrays_with_grads):
    for data, grad in arrays_with_grads:
        numeric = numeric_grad(lambda: loss_fn().item(), data)
        assert relative_error(grad, numeric) < GRAD_TOL


class TestTensor:

    def test_backward_requires_scalar(self):
        with pytest.raises(UsageError):
            backward(Tensor(np.ones(3), requires_grad=True))

    def test_default_precision_is_float32(self):
        assert get_default_dtype() is np.float32
        with precision(np.float64):
            assert Parameter(np.ones(2)).dtype == np.float64
        assert Parameter(np.ones(2)).dtype == np.float32

    def test_gradients_accumulate_over_shared_inputs(self):
        with precision(np.float64):
            x = Parameter(np.array([1.0, -2.0]))
            y = F.t_add(x, x)
            backward(F.t_sum(y))
            assert x.grad.tolist() == [2.0, 2.0]


class TestSparseConvOracles:

    def test_submanifold_conv(self, rng):
        with precision(np.float64):
            coords = random_coords(rng, 60)
            x = SparseTensor.from_arrays(coords, rng.normal(size=(60, 2)))
            w = Tensor(rng.normal(size=(3, 3, 3, 2, 4)))
            b = Tensor(rng.normal(size=4))
            out = subm_conv3(x, w, b)
            assert np.array_equal(out.coords, x.coords)
            feats = rows_by_coord(x)
            for (bi, cx, cy, cz), got in rows_by_coord(out).items():
                expected = b.data.copy()
                for ox, oy, oz in itertools.product((-1, 0, 1), repeat=3):
                    nb = (bi, cx + ox, cy + oy, cz + oz)
                    if nb in feats:
                        expected += feats[nb] @ w.data[ox + 1, oy + 1, oz + 1]
                assert np.allclose(got, expected)

    def test_downconv_gathers_children(self, rng):
        with precision(np.float64):
            coords = random_coords(rng, 50)
            x = SparseTensor.from_arrays(coords, rng.normal(size=(50, 3)))
            w = Tensor(rng.normal(size=(2, 2, 2, 3, 2)))
            out = sparse_downconv2(x, w)
            expected = {}
            for c, f in rows_by_coord(x).items():
                parent = (c[0], c[1] // 2, c[2] // 2, c[3] // 2)
                local = (c[1] - 2 * parent[1], c[2] - 2 * parent[2], c[3] - 2 * parent[3])
                expected[parent] = expected.get(parent, 0) + f @ w.data[local]
            got = rows_by_coord(out)
            assert set(got) == set(expected)
            for k, v in expected.items():
                assert np.allclose(got[k], v)

    def test_upsample_creates_eight_children(self, rng):
        with precision(np.float64):
            coords = random_coords(rng, 10)
            x = SparseTensor.from_arrays(coords, rng.normal(size=(10, 2)))
            w = Tensor(rng.normal(size=(2, 2, 2, 2, 3)))
            b = Tensor(rng.normal(size=3))
            out = sparse_upsample2(x, w, b)
            assert len(out) == 80
            got = rows_by_coord(out)
            for c, f in rows_by_coord(x).items():
                for l in itertools.product((0, 1), repeat=3):
                    child = (c[0], 2 * c[1] + l[0], 2 * c[2] + l[1], 2 * c[3] + l[2])
                    assert np.allclose(got[child], b.data + f @ w.data[l])

    def test_negative_coordinates_downsample_by_floor(self):
        x = SparseTensor.from_arrays(np.array([[0, -1, -2, -3]]), np.ones((1, 1)))
        out = sparse_downconv2(x, Tensor(np.ones((2, 2, 2, 1, 1))))
        assert out.coords.tolist() == [[0, -1, -1, -2]]

    def test_kernel_shape_is_checked(self, rng):
        x = SparseTensor.from_arrays(random_coords(rng, 5), np.ones((5, 2)))
        with pytest.raises(ShapeError):
            subm_conv3(x, Tensor(np.ones((3, 3, 3, 3, 1))))
        with pytest.raises(ShapeError):
            sparse_downconv2(x, Tensor(np.ones((3, 3, 3, 2, 1))))


class TestDenseConv:

    @pytest.mark.parametrize('stride,padding', [(1, 1), (2, 1), (1, 0)])
    def test_matches_naive_cross_correlation(self, rng, stride, padding):
        with precision(np.float64):
            xv = rng.normal(size=(2, 2, 5, 4, 6))
            w = rng.normal(size=(3, 3, 3, 2, 3))
            b = rng.normal(size=3)
            out = dense_conv3(DenseTensor(Tensor(xv)), Tensor(w), Tensor(b), stride, padding)
            xp = np.pad(xv, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
            dims = [(n + 2 * padding - 3) // stride + 1 for n in xv.shape[2:]]
            assert out.values.shape == (2, 3, *dims)
            for bi, x, y, z in itertools.product(range(2), *[range(n) for n in dims]):
                patch = xp[bi, :, x * stride:x * stride + 3, y * stride:y * stride + 3,
                           z * stride:z * stride + 3]
                expected = b + np.einsum('cijk,ijkcd->d', patch, w)
                assert np.allclose(out.values.data[bi, :, x, y, z], expected)

    def test_rejects_too_small_input(self):
        with pytest.raises(ShapeError):
            dense_conv3(DenseTensor(Tensor(np.ones((1, 1, 2, 2, 2)))),
                        Tensor(np.ones((3, 3, 3, 1, 1))))


SEEDS = range(5)


def away_from(values: np.ndarray, points, gap: float = 0.05) -> np.ndarray:
    """Сдвигает значения от точек излома, чтобы конечные разности были гладкими."""
    out = values.copy()
    for p in points:
        near = np.abs(out - p) < gap
        out[near] = p + np.where(out[near] >= p, gap, -gap) * 2
    return out


@pytest.mark.parametrize('seed', SEEDS)
class TestGradients:

    def test_subm_conv(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = SparseTensor.from_arrays(random_coords(rng, 30), rng.normal(size=(30, 2)), True)
            w = Parameter(rng.normal(size=(3, 3, 3, 2, 3)))
            b = Parameter(rng.normal(size=3))
            r = rng.normal(size=(30, 3))
            loss = lambda: weighted_sum(subm_conv3(x, w, b).features, r)
            backward(loss())
            check_grad(loss, (w.data, w.grad), (b.data, b.grad),
                       (x.features.data, x.features.grad))

    def test_down_and_upsample(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = SparseTensor.from_arrays(random_coords(rng, 25), rng.normal(size=(25, 2)), True)
            wd = Parameter(rng.normal(size=(2, 2, 2, 2, 2)))
            wu = Parameter(rng.normal(size=(2, 2, 2, 2, 1)))
            n_out = len(sparse_upsample2(sparse_downconv2(x, wd), wu))
            r = rng.normal(size=(n_out, 1))
            loss = lambda: weighted_sum(sparse_upsample2(sparse_downconv2(x, wd), wu).features, r)
            backward(loss())
            check_grad(loss, (wd.data, wd.grad), (wu.data, wu.grad),
                       (x.features.data, x.features.grad))

    @pytest.mark.parametrize('stride', [1, 2])
    def test_dense_conv(self, seed, stride):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            xv = Tensor(rng.normal(size=(1, 2, 4, 5, 3)), requires_grad=True)
            w = Parameter(rng.normal(size=(3, 3, 3, 2, 2)))
            b = Parameter(rng.normal(size=2))
            shape = dense_conv3(DenseTensor(xv), w, b, stride, 1).values.shape
            r = rng.normal(size=shape)
            loss = lambda: weighted_sum(dense_conv3(DenseTensor(xv), w, b, stride, 1).values, r)
            backward(loss())
            check_grad(loss, (w.data, w.grad), (b.data, b.grad), (xv.data, xv.grad))

    def test_dense_round_trip_and_skip(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            coords = random_coords(rng, 20, extent=4)
            x = SparseTensor.from_arrays(coords, rng.normal(size=(20, 2)), True)
            src = SparseTensor.from_arrays(coords[::2], rng.normal(size=(10, 1)), True)
            r = rng.normal(size=(20, 3))

            def loss():
                dense = to_dense(x, (0, 0, 0), (4, 4, 4), fill=0.5, batch_size=2)
                back = to_sparse(dense, x.cset)
                return weighted_sum(skip_concat(back, src).features, r)

            backward(loss())
            check_grad(loss, (x.features.data, x.features.grad),
                       (src.features.data, src.features.grad))

    def test_to_sparse(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            xv = Tensor(rng.normal(size=(2, 3, 4, 4, 4)), requires_grad=True)
            coords = random_coords(rng, 25, extent=4)
            r = rng.normal(size=(25, 3))
            loss = lambda: weighted_sum(to_sparse(DenseTensor(xv), coords).features, r)
            backward(loss())
            check_grad(loss, (xv.data, xv.grad))
            picked = np.zeros(xv.data.shape, dtype=bool)
            picked[coords[:, 0], :, coords[:, 1], coords[:, 2], coords[:, 3]] = True
            assert np.all(xv.grad[~picked] == 0)

    def test_relu(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = Tensor(away_from(rng.normal(size=(20, 3)), [0.0]), requires_grad=True)
            r = rng.normal(size=(20, 3))
            loss = lambda: weighted_sum(F.t_relu(x), r)
            backward(loss())
            check_grad(loss, (x.data, x.grad))

    def test_sigmoid(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = Tensor(rng.normal(scale=4.0, size=(20, 2)), requires_grad=True)
            r = rng.normal(size=(20, 2))
            loss = lambda: weighted_sum(F.t_sigmoid(x), r)
            backward(loss())
            check_grad(loss, (x.data, x.grad))

    def test_clamp(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = Tensor(away_from(rng.normal(size=(30, 1)), [-0.5, 0.5]), requires_grad=True)
            r = rng.normal(size=(30, 1))
            loss = lambda: weighted_sum(F.t_clamp(x, -0.5, 0.5), r)
            backward(loss())
            check_grad(loss, (x.data, x.grad))
            assert np.all(x.grad[np.abs(x.data) > 0.5] == 0)

    def test_concat_and_add(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            coords = random_coords(rng, 15)
            a = SparseTensor.from_arrays(coords, rng.normal(size=(15, 2)), True)
            b = SparseTensor.from_arrays(coords, rng.normal(size=(15, 3)), True)
            c = SparseTensor.from_arrays(coords, rng.normal(size=(15, 5)), True)
            r = rng.normal(size=(15, 5))
            loss = lambda: weighted_sum(F.add(F.concat_features(a, b), c).features, r)
            backward(loss())
            check_grad(loss, (a.features.data, a.features.grad),
                       (b.features.data, b.features.grad), (c.features.data, c.features.grad))

    def test_batchnorm_training(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = SparseTensor.from_arrays(random_coords(rng, 40), rng.normal(size=(40, 3)), True)
            bn = BatchNorm(3)
            bn.gamma.data[:] = rng.normal(size=3)
            r = rng.normal(size=(40, 3))
            loss = lambda: weighted_sum(bn(x).features, r)
            backward(loss())
            check_grad(loss, (bn.gamma.data, bn.gamma.grad), (bn.beta.data, bn.beta.grad),
                       (x.features.data, x.features.grad))

    def test_batchnorm_eval(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = SparseTensor.from_arrays(random_coords(rng, 40), rng.normal(size=(40, 3)), True)
            bn = BatchNorm(3).eval()
            bn.gamma.data[:] = rng.normal(size=3)
            bn.state.running_mean[:] = rng.normal(size=3)
            bn.state.running_var[:] = rng.uniform(0.5, 2.0, size=3)
            r = rng.normal(size=(40, 3))
            loss = lambda: weighted_sum(bn(x).features, r)
            backward(loss())
            check_grad(loss, (bn.gamma.data, bn.gamma.grad), (bn.beta.data, bn.beta.grad),
                       (x.features.data, x.features.grad))

    def test_downconv_and_upsample_are_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            # полные блоки 2x2x2: потомки каждого родителя совпадают с входными координатами
            parents = random_coords(rng, 6, extent=3)
            children = np.concatenate([parents * [1, 2, 2, 2] + [0, *offset] for offset in
                                       itertools.product((0, 1), repeat=3)])
            x = SparseTensor.from_arrays(children, rng.normal(size=(len(children), 3)))
            w = Tensor(rng.normal(size=(2, 2, 2, 3, 2)))
            down = sparse_downconv2(x, w)
            y = SparseTensor.from_arrays(down.coords, rng.normal(size=(len(down), 2)))
            up = sparse_upsample2(y, Tensor(np.swapaxes(w.data, 3, 4)))
            assert np.array_equal(up.coords, x.coords)
            lhs = np.sum(down.features.data * y.features.data)
            rhs = np.sum(x.features.data * up.features.data)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_losses(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            coords = random_coords(rng, 30, batches=1)
            values = np.sign(rng.normal(size=(30, 1))) * (0.5 + np.abs(rng.normal(size=(30, 1))))
            pred = SparseTensor.from_arrays(coords, values, True)
            target = SparseTSDF(coords[::2, 1:], np.clip(rng.normal(size=15), -2.9, 2.9))
            mask = VoxelSet(coords[:20, 1:])
            loss = lambda: F.t_add(masked_l1_logtsdf(pred, target, mask),
                                   bce_logits(pred, target, mask))
            backward(loss())
            check_grad(loss, (pred.features.data, pred.features.grad))
            outside = ~mask.contains(pred.coords[:, 1:])
            assert np.all(pred.features.grad[outside] == 0)

    def test_changes_behind_surface_leave_loss_and_grad_unchanged(self, seed):
        rng = np.random.default_rng(seed)
        coords = random_coords(rng, 40, batches=1)
        d = rng.uniform(-2.9, 2.9, size=40)
        hidden = rng.random(40) < 0.4
        d[hidden] = -3.0
        target = SparseTSDF(coords[:, 1:], d, np.ones(40), ~hidden)
        mask = VoxelSet.observed_of(target)
        base = rng.normal(size=(40, 1))
        moved = base.copy()
        moved[hidden] += rng.normal(scale=3.0, size=(int(hidden.sum()), 1))
        # часть записей за поверхностью удаляется: отсутствие записи тоже вне маски
        thinned = target.select(~hidden | (rng.random(40) < 0.5))
        results = []
        for feats, tgt in ((base, target), (moved, thinned)):
            pred = SparseTensor.from_arrays(coords, feats, True)
            loss = F.t_add(masked_l1_logtsdf(pred, tgt, mask), bce_logits(pred, tgt, mask))
            backward(loss)
            results.append((loss.item(), pred.features.grad.copy()))
        assert results[0][0] == results[1][0]
        assert np.array_equal(results[0][1], results[1][1])

    def test_sample_order_gives_identical_loss(self, seed):
        rng = np.random.default_rng(seed)
        groups = np.repeat([0, 1, 2], 12)
        values = Tensor(rng.normal(size=(36, 1)))
        target = rng.normal(size=36)
        occ = (rng.random(36) < 0.5).astype(np.float64)
        mask = rng.random(36) < 0.7
        # образцы переименованы и переставлены, порядок строк внутри образца сохранён
        relabeled = rng.permutation(3)[groups]
        order = np.argsort(relabeled, kind='stable')
        swapped = Tensor(values.data[order])
        l1_a = masked_l1(values, target, mask, groups=groups).item()
        l1_b = masked_l1(swapped, target[order], mask[order], groups=relabeled[order]).item()
        bce_a = bce_logits_values(values, occ, mask, groups=groups).item()
        bce_b = bce_logits_values(swapped, occ[order], mask[order],
                                  groups=relabeled[order]).item()
        assert l1_a == l1_b
        assert bce_a == bce_b


class TestLosses:

    def test_missing_target_counts_as_free_space(self):
        pred = SparseTensor.from_arrays(np.array([[0, 0, 0, 0]]), np.array([[3.0]]))
        loss = masked_l1_logtsdf(pred, SparseTSDF.empty(), None)
        assert loss.item() == pytest.approx(0.0)

    def test_empty_mask_gives_zero(self):
        pred = SparseTensor.from_arrays(np.array([[0, 0, 0, 0]]), np.array([[1.0]]), True)
        loss = bce_logits(pred, np.array([1.0]), VoxelSet())
        assert loss.item() == 0.0
        backward(loss)
        assert np.all(pred.features.grad == 0)

    def test_log_transform_is_odd(self):
        d = np.array([-2.0, 0.0, 2.0])
        assert log_transform(d).tolist() == pytest.approx([-np.log(3), 0.0, np.log(3)])

    def test_per_sample_targets(self):
        coords = np.array([[0, 0, 0, 0], [1, 0, 0, 0]])
        pred = SparseTensor.from_arrays(coords, np.array([[1.0], [2.0]]))
        targets = [SparseTSDF([[0, 0, 0]], [1.0]), SparseTSDF([[0, 0, 0]], [2.0])]
        assert masked_l1_logtsdf(pred, targets, None).item() == pytest.approx(0.0)
        with pytest.raises(ShapeError):
            masked_l1_logtsdf(pred, targets[:1], None)


@given(arrays(np.float64, st.integers(1, 20),
              elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_stable_sigmoid_is_bounded(z):
    s = stable_sigmoid(z)
    assert np.all(np.isfinite(s))
    assert np.all((s >= 0) & (s <= 1))


class TestShapes:

    def test_to_dense_out_of_range(self):
        x = SparseTensor.from_arrays(np.array([[0, 5, 0, 0]]), np.ones((1, 1)))
        with pytest.raises(IndexError):
            to_dense(x, (0, 0, 0), (4, 4, 4))

    def test_to_sparse_out_of_range(self):
        dense = DenseTensor(Tensor(np.zeros((1, 1, 2, 2, 2))))
        with pytest.raises(IndexError):
            to_sparse(dense, np.array([[0, 2, 0, 0]]))

    def test_concat_requires_same_coordinates(self):
        a = SparseTensor.from_arrays(np.array([[0, 0, 0, 0]]), np.ones((1, 1)))
        b = SparseTensor.from_arrays(np.array([[0, 1, 0, 0]]), np.ones((1, 1)))
        with pytest.raises(ShapeError):
            F.concat_features(a, b)
        with pytest.raises(ShapeError):
            F.add(a, b)

    def test_layer_collects_parameters(self, rng):
        block = ConvBNReLU(SubmConv3(2, 4, rng))
        names = [n for n, _ in block.named_parameters()]
        assert names == ['conv.weight', 'conv.bias', 'bn.gamma', 'bn.beta']
        assert set(dict(block.named_buffers())) == {'bn.state.running_mean',
                                                    'bn.state.running_var'}
        assert not block.eval().bn.training


class TestBatchNormState:

    def test_running_statistics(self):
        bn = BatchNorm(1)
        x = SparseTensor.from_arrays(np.array([[0, 0, 0, 0], [0, 1, 0, 0]]),
                                     np.array([[1.0], [3.0]]))
        bn(x)
        assert bn.state.running_mean[0] == pytest.approx(0.2)
        assert bn.state.running_var[0] == pytest.approx(0.9 + 0.1 * 2.0)
        bn.eval()
        out = bn(x).features.data[:, 0]
        expected = (np.array([1.0, 3.0]) - 0.2) / np.sqrt(1.1 + 1e-5)
        assert out == pytest.approx(expected, rel=1e-5)


class TestAdam:

    def test_first_step_moves_by_learning_rate(self):
        with precision(np.float64):
            p = Parameter(np.array([1.0, -1.0]))
            p.grad = np.array([0.5, -2.0])
            assert adam_step([p], lr=0.1) == 1
            assert p.data == pytest.approx([0.9, -0.9], abs=1e-6)
            assert p.step == 1

    def test_parameters_without_grad_are_skipped(self):
        p = Parameter(np.ones(3))
        q = Parameter(np.ones(3))
        q.grad = np.ones(3, dtype=np.float32)
        assert adam_step([p, q], lr=0.01) == 1
        assert np.array_equal(p.data, np.ones(3))
        assert p.m is None and p.step == 0
        assert q.m.dtype == np.float32
        zero_grad([q])
        assert q.grad is None
