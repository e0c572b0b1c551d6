"""Overlap and branch-detection metrics for a (prediction, ground-truth) pair."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyGroundTruth, EmptyTree
from .morphology import skeletonize
from .tree import AirwayTree, SizeClass, build_tree, voxel_length_weights
from .volume import VoxelGrid, require_aligned

DETECTION_THRESHOLD = 0.8


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class OverlapMetrics:
    counts: ConfusionCounts
    iou: float
    precision: float
    alr: float
    amr: float
    empty_prediction: bool = False


@dataclass(frozen=True)
class BranchDetection:
    dlr: float
    dbr: float
    per_size_dbr: dict[SizeClass, float]
    detected_ids: list[int]


@dataclass(frozen=True)
class CaseMetrics:
    iou: float
    precision: float
    alr: float
    amr: float
    dlr: float
    dbr: float
    ovacc: float
    per_size_dbr: dict[SizeClass, float]
    counts: ConfusionCounts
    empty_prediction: bool = False


def overlap_metrics(pred: VoxelGrid, gt: VoxelGrid) -> OverlapMetrics:
    """Voxel-overlap metrics: IoU, precision, leakage and missing ratios.

    An empty ground truth is an error (the ratios are undefined); an empty
    prediction only zeroes precision and is flagged rather than raised.
    """
    require_aligned(pred, gt, "prediction and ground truth")
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    if tp + fn == 0:
        raise EmptyGroundTruth("ground truth has no foreground voxels")
    counts = ConfusionCounts(tp, fp, fn)
    empty_prediction = tp + fp == 0
    return OverlapMetrics(
        counts=counts,
        iou=tp / (tp + fp + fn),
        precision=0.0 if empty_prediction else tp / (tp + fp),
        alr=fp / (tp + fn),
        amr=fn / (tp + fn),
        empty_prediction=empty_prediction,
    )


def branch_detection(gt_tree: AirwayTree, pred_mask: VoxelGrid,
                     threshold: float = DETECTION_THRESHOLD) -> BranchDetection:
    """Centerline-coverage detection of ground-truth branches.

    A branch is detected when at least ``threshold`` of its centerline voxels
    lie inside the predicted mask. The detected-length ratio weighs each
    centerline voxel by its share of physical branch length, so it is the
    covered fraction of the total ground-truth centerline length.
    """
    require_aligned(gt_tree, pred_mask, "tree and prediction")
    if not gt_tree.branches:
        raise EmptyTree("ground-truth tree has no branches")
    pred = pred_mask.data.astype(bool)
    spacing = gt_tree.geometry.spacing

    detected_ids = []
    covered_length = 0.0
    total_length = 0.0
    covered_voxels = 0
    total_voxels = 0
    per_class_hits: dict[SizeClass, list[bool]] = {}
    for branch in gt_tree.branches:
        vox = branch.voxels
        inside = pred[vox[:, 0], vox[:, 1], vox[:, 2]]
        coverage = inside.sum() / len(vox)
        hit = bool(coverage >= threshold)
        if hit:
            detected_ids.append(branch.id)
        per_class_hits.setdefault(branch.size_class, []).append(hit)
        weights = voxel_length_weights(vox, spacing)
        covered_length += float(weights[inside].sum())
        total_length += float(weights.sum())
        covered_voxels += int(inside.sum())
        total_voxels += len(vox)

    if total_length > 0:
        dlr = covered_length / total_length
    else:
        # degenerate tree of zero-length branches: fall back to voxel coverage
        dlr = covered_voxels / total_voxels
    dbr = len(detected_ids) / len(gt_tree.branches)
    per_size_dbr = {cls: sum(hits) / len(hits) for cls, hits in per_class_hits.items()}
    return BranchDetection(dlr=dlr, dbr=dbr, per_size_dbr=per_size_dbr,
                           detected_ids=detected_ids)


def _canonical_axes(gt: VoxelGrid, pred: VoxelGrid) -> tuple[int, ...]:
    """Axes to flip so the pair is in a canonical orientation.

    Decided per axis from the ground truth's foreground centroid; exact ties
    fall back to byte comparisons of the ground truth, then the prediction.
    Any simultaneous axis flip of both inputs therefore canonicalizes to the
    same pair, which makes every scalar metric exactly flip-invariant.
    """
    axes = []
    idx = np.nonzero(gt.data)
    n = idx[0].size
    for ax in range(3):
        s = int(idx[ax].sum())
        reflected = (gt.data.shape[ax] - 1) * n - s
        if s != reflected:
            wants_flip = s > reflected
        else:
            a, b = np.flip(gt.data, axis=ax).tobytes(), gt.data.tobytes()
            if a != b:
                wants_flip = a < b
            else:
                wants_flip = np.flip(pred.data, axis=ax).tobytes() < pred.data.tobytes()
        if wants_flip:
            axes.append(ax)
    return tuple(axes)


def case_metrics(pred: VoxelGrid, gt: VoxelGrid,
                 threshold: float = DETECTION_THRESHOLD,
                 prune_vox: int = 2) -> CaseMetrics:
    """All per-case metrics for one prediction against one ground truth.

    No implicit postprocessing is applied to the prediction; component
    filtering is an explicit caller decision. Both inputs are brought into a
    canonical orientation first, so storing the same anatomy flipped along
    any axis yields identical scores.
    """
    overlap = overlap_metrics(pred, gt)
    axes = _canonical_axes(gt, pred)
    if axes:
        pred = pred.replace_data(np.flip(pred.data, axis=axes))
        gt = gt.replace_data(np.flip(gt.data, axis=axes))
    gt_tree = build_tree(skeletonize(gt), gt, prune_vox=prune_vox)
    detection = branch_detection(gt_tree, pred, threshold=threshold)
    ovacc = (overlap.iou + overlap.precision + detection.dbr + detection.dlr) / 4.0
    return CaseMetrics(
        iou=overlap.iou,
        precision=overlap.precision,
        alr=overlap.alr,
        amr=overlap.amr,
        dlr=detection.dlr,
        dbr=detection.dbr,
        ovacc=ovacc,
        per_size_dbr=detection.per_size_dbr,
        counts=overlap.counts,
        empty_prediction=overlap.empty_prediction,
    )


CSV_COLUMNS = ["case_id", "iou", "precision", "alr", "amr", "dlr", "dbr", "ovacc",
               "dbr_terminal", "dbr_small", "dbr_medium", "dbr_large"]


def metrics_row(case_id: str, m: CaseMetrics) -> list:
    row = [case_id, repr(m.iou), repr(m.precision), repr(m.alr), repr(m.amr),
           repr(m.dlr), repr(m.dbr), repr(m.ovacc)]
    for cls in (SizeClass.TERMINAL, SizeClass.SMALL, SizeClass.MEDIUM, SizeClass.LARGE):
        row.append(repr(m.per_size_dbr[cls]) if cls in m.per_size_dbr else "")
    return row


def write_case_metrics(rows: list[tuple[str, CaseMetrics]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for case_id, m in rows:
            writer.writerow(metrics_row(case_id, m))


def summarize(rows: list[tuple[str, CaseMetrics]]) -> dict[str, float]:
    """Per-case means of every metric column (size classes over cases that have them)."""
    out: dict[str, float] = {}
    for name in ("iou", "precision", "alr", "amr", "dlr", "dbr", "ovacc"):
        out[name] = float(np.mean([getattr(m, name) for _, m in rows]))
    for cls in SizeClass:
        vals = [m.per_size_dbr[cls] for _, m in rows if cls in m.per_size_dbr]
        if vals:
            out[f"dbr_{cls.value}"] = float(np.mean(vals))
    return out
