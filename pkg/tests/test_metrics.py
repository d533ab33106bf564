# -*- coding: utf-8 -*-
"""Тесты l1-метрик, полноты завершения и графиков."""

import itertools

import numpy as np
import pytest

from grid.voxels import CropSpec, SparseTSDF, VoxelCoord
from helpers import analytic_tsdf, grid_coords
from scenes.primitives import Scene, Sphere
from stats.metrics import MetricsReport, completion_recall, l1_metrics, surface_voxels
from stats.plots import plot_loss_curve, plot_metrics

BOX = CropSpec(VoxelCoord(0, 0, 0), (5, 4, 3))


def random_tsdf(rng, keep=0.6, observed_share=0.8):
    coords = grid_coords((-1, 0, 0), (6, 4, 4))
    coords = coords[rng.random(len(coords)) < keep]
    d = rng.uniform(-3.0, 3.0, size=len(coords))
    observed = rng.random(len(coords)) < observed_share
    d[~observed] = -3.0
    return SparseTSDF(coords, d, np.ones(len(coords)), observed)


def oracle(pred, target, box, input_scan=None):
    def value(s, c):
        e = s.get(c)
        return min(abs(e.d), 3.0) if e is not None else 3.0

    def observed(s, c):
        e = s.get(c)
        return e is not None and e.observed

    cells = [tuple(c) for c in grid_coords(box.lo, box.hi).tolist()]
    valid = {c for c in cells if observed(target, c)}
    regions = {'entire': [], 'unobserved': [], 'target': [], 'predicted': []}
    for c in cells:
        if c not in valid:
            continue
        p, t = value(pred, c), value(target, c)
        err = abs(p - t)
        regions['entire'].append(err)
        if input_scan is not None:
            unobs = not observed(input_scan, c)
        else:
            unobs = any(n not in valid for n in (
                (c[0] + i, c[1] + j, c[2] + k)
                for i, j, k in itertools.product((-1, 0, 1), repeat=3))
                if box.contains(np.array([n]))[0])
        if unobs:
            regions['unobserved'].append(err)
        if t <= 1.0:
            regions['target'].append(err)
        if p <= 1.0:
            regions['predicted'].append(err)
    return {k: (float(np.mean(v)) if v else 0.0, len(v)) for k, v in regions.items()}


def assert_matches(report, expected):
    pairs = [('entire', report.l1_entire_volume, report.n_entire_volume),
             ('unobserved', report.l1_unobserved, report.n_unobserved),
             ('target', report.l1_target, report.n_target),
             ('predicted', report.l1_predicted, report.n_predicted)]
    for key, value, count in pairs:
        assert count == expected[key][1], key
        assert value == pytest.approx(expected[key][0], abs=1e-12), key


class TestL1Metrics:

    @pytest.mark.parametrize('seed', range(5))
    def test_matches_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pred, target, scan = random_tsdf(rng), random_tsdf(rng), random_tsdf(rng)
        assert_matches(l1_metrics(pred, target, BOX), oracle(pred, target, BOX))
        assert_matches(l1_metrics(pred, target, BOX, scan), oracle(pred, target, BOX, scan))

    def test_identical_inputs_give_zero(self, rng):
        target = random_tsdf(rng)
        report = l1_metrics(target, target, BOX)
        assert report.l1_entire_volume == 0.0
        assert report.l1_unobserved == 0.0
        assert report.n_entire_volume == int(target.observed[BOX.contains(target.coords)].sum())

    def test_constant_offset(self):
        coords = grid_coords(BOX.lo, BOX.hi)
        target = SparseTSDF(coords, np.ones(len(coords)))
        pred = SparseTSDF(coords, np.full(len(coords), 0.5))
        report = l1_metrics(pred, target, BOX, input_scan=SparseTSDF.empty())
        assert report.l1_entire_volume == pytest.approx(0.5)
        assert report.n_entire_volume == report.n_unobserved == 60
        assert report.n_target == report.n_predicted == 60

    def test_missing_prediction_counts_as_free_space(self):
        target = SparseTSDF([[0, 0, 0]], [0.0])
        report = l1_metrics(SparseTSDF.empty(), target, BOX)
        assert report.l1_entire_volume == pytest.approx(3.0)

    def test_empty_regions_report_zero(self):
        report = l1_metrics(SparseTSDF.empty(), SparseTSDF.empty(), BOX)
        assert report.n_entire_volume == 0 and report.l1_entire_volume == 0.0

    def test_voxel_size_mismatch(self):
        with pytest.raises(ValueError):
            l1_metrics(SparseTSDF.empty(0.02), SparseTSDF.empty(0.04), BOX)


class TestReport:

    def test_csv_and_table(self):
        report = MetricsReport(0.5, 0.25, 1.0, 0.125, 10, 5, 4, 3, completion_recall=0.75)
        header = MetricsReport.csv_header().split(',')
        row = report.csv_row().split(',')
        assert len(header) == len(row) == 9
        assert row[0] == '0.500000' and row[4] == '10' and row[-1] == '0.750000'
        assert 'Полнота' in report.table()
        assert MetricsReport().csv_row().endswith(',')


@pytest.fixture(scope='module')
def ball_scene():
    return Scene([Sphere((0.3, 0.3, 0.3), 0.15)], np.zeros(3), np.full(3, 0.6))


class TestCompletionRecall:

    def test_surface_voxels_are_near_surface(self, ball_scene):
        found = surface_voxels(ball_scene, 0.04, (0, 0, 0), (16, 16, 16))
        assert len(found) > 0
        dist = np.abs(ball_scene.sdf(found * 0.04))
        assert np.all(dist < 0.04)

    def test_perfect_prediction_recovers_everything(self, ball_scene):
        pred = analytic_tsdf(ball_scene.sdf, (0, 0, 0), (16, 16, 16), 0.04)
        assert completion_recall(pred, ball_scene, SparseTSDF.empty(0.04)) == 1.0

    def test_complete_input_gives_zero(self, ball_scene):
        full = analytic_tsdf(ball_scene.sdf, (0, 0, 0), (16, 16, 16), 0.04)
        assert completion_recall(SparseTSDF.empty(0.04), ball_scene, full) == 0.0

    def test_half_prediction(self, ball_scene):
        full = analytic_tsdf(ball_scene.sdf, (0, 0, 0), (16, 16, 16), 0.04)
        half = full.select(full.coords[:, 0] < 8)
        recall = completion_recall(half, ball_scene, SparseTSDF.empty(0.04))
        assert 0.3 < recall < 0.8

    def test_origin_shifts_crop_indices(self, ball_scene):
        full = analytic_tsdf(ball_scene.sdf, (0, 0, 0), (16, 16, 16), 0.04)
        crop = full.translated((-4, -4, -4))
        box = CropSpec(VoxelCoord(0, 0, 0), (12, 12, 12))
        assert completion_recall(crop, ball_scene, SparseTSDF.empty(0.04),
                                 origin=(4, 4, 4), box=box) == 1.0


def test_plots_are_written(tmp_path):
    history = [{'iteration': i, 'active_levels': 1 + i // 3, 'total': 1.0 / (i + 1),
                'final': 0.5 / (i + 1)} for i in range(8)]
    curve = plot_loss_curve(history, tmp_path / 'curve.png', n_level=3)
    bars = plot_metrics({'a': MetricsReport(0.1, 0.2, 0.3, 0.4),
                         'b': MetricsReport(0.2, 0.1, 0.4, 0.3)}, tmp_path / 'bars.png')
    assert curve.stat().st_size > 0 and bars.stat().st_size > 0
