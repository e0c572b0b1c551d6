import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airwaykit.errors import EmptyGroundTruth, EmptyTree, GeometryMismatch
from airwaykit.perturb import flip
from airwaykit.seg_metrics import (
    branch_detection,
    case_metrics,
    overlap_metrics,
    summarize,
    write_case_metrics,
)
from airwaykit.synth import _tube_voxels, corrupt
from airwaykit.tree import SizeClass, build_tree
from airwaykit.volume import Geometry, VoxelGrid

from conftest import make_grid, straight_line_grid


def counts_grid(tp, fp, fn, dims=(16, 16, 16)):
    """Grids realizing exact confusion counts (tp+fp+fn must fit)."""
    total = tp + fp + fn
    assert total <= dims[0] * dims[1] * dims[2]
    pred = np.zeros(np.prod(dims), dtype=np.uint8)
    gt = np.zeros(np.prod(dims), dtype=np.uint8)
    pred[:tp] = 1
    gt[:tp] = 1
    pred[tp:tp + fp] = 1
    gt[tp + fp:total] = 1
    return (make_grid(pred.reshape(dims)), make_grid(gt.reshape(dims)))


class TestOverlapMetrics:
    def test_identity(self):
        grid = straight_line_grid()
        m = overlap_metrics(grid, grid)
        assert (m.iou, m.precision, m.alr, m.amr) == (1.0, 1.0, 0.0, 0.0)

    def test_disjoint(self):
        pred, gt = counts_grid(tp=0, fp=40, fn=25)
        m = overlap_metrics(pred, gt)
        assert m.iou == 0.0 and m.precision == 0.0
        assert m.alr == 40 / 25
        assert m.amr == 1.0

    def test_published_style_counts(self):
        pred, gt = counts_grid(tp=1000, fp=78, fn=27)
        m = overlap_metrics(pred, gt)
        assert m.iou == pytest.approx(0.9050, abs=5e-5)
        assert m.precision == pytest.approx(0.9276, abs=5e-5)
        assert m.alr == pytest.approx(0.0760, abs=5e-5)
        assert m.amr == pytest.approx(0.0263, abs=5e-5)

    def test_empty_ground_truth_raises(self):
        pred, gt = counts_grid(tp=0, fp=10, fn=0)
        with pytest.raises(EmptyGroundTruth):
            overlap_metrics(pred, gt)

    def test_empty_prediction_flagged(self):
        pred, gt = counts_grid(tp=0, fp=0, fn=10)
        m = overlap_metrics(pred, gt)
        assert m.empty_prediction
        assert m.precision == 0.0
        assert m.amr == 1.0

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryMismatch):
            overlap_metrics(straight_line_grid(),
                            make_grid(np.ones((4, 4, 4))))

    def test_exhaustive_counting_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            dims = tuple(rng.integers(3, 13, size=3))
            a = rng.random(dims) < 0.4
            b = rng.random(dims) < 0.4
            if not b.any():
                continue
            m = overlap_metrics(make_grid(a), make_grid(b))
            tp = fp = fn = 0
            for x in range(dims[0]):
                for y in range(dims[1]):
                    for z in range(dims[2]):
                        if a[x, y, z] and b[x, y, z]:
                            tp += 1
                        elif a[x, y, z]:
                            fp += 1
                        elif b[x, y, z]:
                            fn += 1
            assert (m.counts.tp, m.counts.fp, m.counts.fn) == (tp, fp, fn)
            assert m.iou == tp / (tp + fp + fn)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_invariants(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((8, 8, 8)) < 0.45
        b = rng.random((8, 8, 8)) < 0.45
        if not (a.any() and b.any()):
            return
        ga, gb = make_grid(a), make_grid(b)
        m = overlap_metrics(ga, gb)
        assert m.iou <= m.precision + 1e-15
        recall = m.counts.tp / (m.counts.tp + m.counts.fn)
        assert m.iou <= recall + 1e-15
        assert overlap_metrics(gb, ga).iou == m.iou  # symmetry

    def test_monotone_in_added_voxels(self):
        rng = np.random.default_rng(5)
        a = rng.random((8, 8, 8)) < 0.3
        b = rng.random((8, 8, 8)) < 0.3
        b[0, 0, 0] = True
        base = overlap_metrics(make_grid(a), make_grid(b))
        # adding a true-positive voxel
        missing = np.argwhere(b & ~a)
        if len(missing):
            a2 = a.copy()
            a2[tuple(missing[0])] = True
            m2 = overlap_metrics(make_grid(a2), make_grid(b))
            assert m2.iou >= base.iou
        # adding a false-positive voxel
        free = np.argwhere(~a & ~b)
        a3 = a.copy()
        a3[tuple(free[0])] = True
        m3 = overlap_metrics(make_grid(a3), make_grid(b))
        assert m3.alr > base.alr
        assert m3.amr == base.amr


class TestBranchDetection:
    def test_full_coverage(self, deep_tree):
        _, mask, _, _, tree = deep_tree
        det = branch_detection(tree, mask)
        assert det.dlr == 1.0 and det.dbr == 1.0
        assert all(v == 1.0 for v in det.per_size_dbr.values())
        assert det.detected_ids == [b.id for b in tree.branches]

    def test_trunk_only_prediction(self, y_tree):
        spec, mask, truth, skeleton, tree = y_tree
        trunk = truth[0]
        pred_data = _tube_voxels(mask.geometry.dims, trunk.start, trunk.end,
                                 trunk.radius_vox)
        pred = VoxelGrid(mask.geometry, pred_data)
        det = branch_detection(tree, pred)
        assert det.dbr == pytest.approx(1 / 3)
        trunk_rec = max(tree.branches, key=lambda b: b.radius_mm)
        expected_dlr = trunk_rec.length_mm / tree.total_length_mm
        assert det.dlr == pytest.approx(expected_dlr, abs=0.02)
        assert det.dlr == pytest.approx(1 / 3, abs=0.05)

    def test_threshold_boundary(self):
        grid = straight_line_grid(n=100, dims=(104, 9, 9))
        tree = build_tree(grid, grid)
        assert tree.branches[0].voxel_count == 100
        vox = tree.branches[0].voxels

        def covering(n):
            data = np.zeros(grid.geometry.dims, dtype=np.uint8)
            data[vox[:n, 0], vox[:n, 1], vox[:n, 2]] = 1
            return make_grid(data, grid.geometry.spacing)

        assert branch_detection(tree, covering(79)).dbr == 0.0
        assert branch_detection(tree, covering(80), threshold=0.8).dbr == 1.0

    def test_per_size_classes_omit_missing(self, y_tree):
        *_, tree = y_tree
        det = branch_detection(tree, VoxelGrid(tree.geometry,
                                               np.ones(tree.geometry.dims)))
        present = {b.size_class for b in tree.branches}
        assert set(det.per_size_dbr) == present
        assert SizeClass.LARGE not in det.per_size_dbr

    def test_empty_tree_raises(self, y_tree):
        *_, tree = y_tree
        from dataclasses import replace
        with pytest.raises(EmptyTree):
            branch_detection(replace(tree, branches=[]),
                             VoxelGrid(tree.geometry, np.ones(tree.geometry.dims)))


class TestCaseMetrics:
    def test_perfect_prediction(self, y_tree):
        _, mask, *_ = y_tree
        m = case_metrics(mask, mask)
        assert m.ovacc == 1.0
        assert (m.iou, m.precision, m.dlr, m.dbr) == (1.0, 1.0, 1.0, 1.0)
        assert (m.alr, m.amr) == (0.0, 0.0)

    def test_ovacc_is_mean_of_four(self, deep_tree):
        _, mask, truth, *_ = deep_tree
        pred = corrupt(mask, truth, "erase-branch", seed=1).grid
        m = case_metrics(pred, mask)
        assert m.ovacc == (m.iou + m.precision + m.dbr + m.dlr) / 4.0
        assert m.dbr < 1.0

    def test_flip_equivariance_exact(self, y_tree):
        _, mask, truth, *_ = y_tree
        pred = corrupt(mask, truth, "erase-branch", seed=2).grid
        base = case_metrics(pred, mask)
        for axis in ("x", "y", "z"):
            m = case_metrics(flip(pred, axis), flip(mask, axis))
            for field in ("iou", "precision", "alr", "amr", "dlr", "dbr", "ovacc"):
                assert getattr(m, field) == getattr(base, field)
            assert m.per_size_dbr == base.per_size_dbr


class TestCsvOutput:
    def test_write_and_summarize(self, tmp_path, y_tree):
        _, mask, *_ = y_tree
        m = case_metrics(mask, mask)
        rows = [("case_a", m), ("case_b", m)]
        path = tmp_path / "per_case.csv"
        write_case_metrics(rows, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].split(",")[:3] == ["case_id", "iou", "precision"]
        summary = summarize(rows)
        assert summary["ovacc"] == 1.0
        assert summary["alr"] == 0.0
