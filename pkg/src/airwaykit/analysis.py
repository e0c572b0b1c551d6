"""Residual heatmaps and airway-derived imaging biomarkers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyLungMask, EmptyRoi
from .morphology import skeletonize
from .tree import AirwayTree, SizeClass, build_tree
from .volume import IntensityVolume, VoxelGrid, require_aligned

_AXES = {"x": 0, "y": 1, "z": 2}

# fixed histogram for intensity entropy: 25 HU bins spanning [-1024, 400] HU
ENTROPY_BIN_WIDTH = 25.0
ENTROPY_RANGE = (-1024.0, 400.0)


@dataclass(frozen=True)
class HeatmapGrid:
    """Signed accumulation residual: ground truth minus prediction.

    values[i, j] indexes the two remaining axes in (x, y, z) order after
    collapsing ``axis``; positive cells are false-negative dominant.
    """

    axis: str
    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]


def residual_heatmap(pred: VoxelGrid, gt: VoxelGrid, axis: str = "z") -> HeatmapGrid:
    """Accumulate both masks along an axis and subtract prediction from truth."""
    require_aligned(pred, gt, "prediction and ground truth")
    ax = _AXES[axis]
    acc_gt = gt.data.sum(axis=ax, dtype=np.int64)
    acc_pred = pred.data.sum(axis=ax, dtype=np.int64)
    return HeatmapGrid(axis=axis, values=acc_gt - acc_pred)


def write_heatmap_csv(heatmap: HeatmapGrid, path: str | Path) -> None:
    # one CSV row per second-axis index
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for j in range(heatmap.height):
            writer.writerow(int(v) for v in heatmap.values[:, j])


def write_heatmap_pgm(heatmap: HeatmapGrid, path: str | Path) -> None:
    """8-bit PGM with 128 as zero, symmetric scaling by the peak magnitude."""
    values = heatmap.values.astype(np.float64)
    peak = np.abs(values).max()
    scaled = np.zeros_like(values) if peak == 0 else values / peak * 127.0
    pixels = np.clip(np.round(128.0 + scaled), 0, 255).astype(np.uint8)
    header = f"P5\n{heatmap.width} {heatmap.height}\n255\n".encode()
    Path(path).write_bytes(header + pixels.T.tobytes())


def compute_tav(airway: VoxelGrid, lung: VoxelGrid) -> float:
    """Airway foreground volume over lung foreground volume (dimensionless)."""
    require_aligned(airway, lung, "airway and lung masks")
    lung_count = lung.foreground_count
    if lung_count == 0:
        raise EmptyLungMask("lung mask has no foreground voxels")
    return airway.foreground_count / lung_count


def firstorder_features(vol: IntensityVolume, roi: VoxelGrid) -> dict[str, float]:
    """First-order intensity statistics over the ROI voxels.

    Entropy uses the fixed 25 HU bins over [-1024, 400]; values outside are
    clipped into the edge bins. Skewness and kurtosis are the standardized
    3rd/4th central moments (kurtosis not excess); a constant ROI reports 0
    for both by convention, and 0 entropy.
    """
    require_aligned(vol, roi, "volume and roi")
    if roi.foreground_count == 0:
        raise EmptyRoi("roi has no voxels")
    values = vol.data[roi.data.astype(bool)]

    mean = float(values.mean())
    centered = values - mean
    m2 = float(np.mean(centered ** 2))
    if m2 > 0:
        skewness = float(np.mean(centered ** 3)) / m2 ** 1.5
        kurtosis = float(np.mean(centered ** 4)) / m2 ** 2
    else:
        skewness = kurtosis = 0.0

    lo, hi = ENTROPY_RANGE
    edges = np.arange(lo, hi + 2 * ENTROPY_BIN_WIDTH, ENTROPY_BIN_WIDTH)
    clipped = np.clip(values, lo, edges[-1] - ENTROPY_BIN_WIDTH / 2)
    counts, _ = np.histogram(clipped, bins=edges)
    p = counts[counts > 0] / values.size
    entropy = float(-(p * np.log2(p)).sum())

    return {
        "mean": mean,
        "median": float(np.median(values)),
        "min": float(values.min()),
        "max": float(values.max()),
        "std": float(np.sqrt(m2)),
        "skewness": skewness,
        "kurtosis": kurtosis,
        "energy": float((values.astype(np.float64) ** 2).sum()),
        "entropy": entropy,
    }


def shape_features(roi: VoxelGrid) -> dict[str, float]:
    """Volume, exposed-face surface area, and a principal-extent elongation.

    Elongation is sqrt(largest/smallest eigenvalue) of the physical voxel
    coordinate covariance, with each voxel smeared by its cell extent
    (spacing^2/12 per axis) so degenerate ROIs stay finite.
    """
    if roi.foreground_count == 0:
        raise EmptyRoi("roi has no voxels")
    sx, sy, sz = roi.geometry.spacing
    mask = roi.data.astype(bool)

    volume_ml = roi.foreground_count * roi.geometry.voxel_volume_mm3 / 1000.0

    padded = np.pad(mask, 1)
    face_areas = (sy * sz, sx * sz, sx * sy)
    surface = 0.0
    for ax, area in enumerate(face_areas):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        core = padded[1:-1, 1:-1, 1:-1]
        exposed = (core & ~padded[tuple(lo)]).sum() + (core & ~padded[tuple(hi)]).sum()
        surface += float(exposed) * area

    coords = np.argwhere(mask).astype(np.float64) * np.array([sx, sy, sz])
    cov = np.cov(coords, rowvar=False, bias=True) if len(coords) > 1 else np.zeros((3, 3))
    cov = np.atleast_2d(cov) + np.diag([sx ** 2, sy ** 2, sz ** 2]) / 12.0
    eigs = np.linalg.eigvalsh(cov)
    elongation = float(np.sqrt(eigs[-1] / eigs[0]))

    return {
        "volume_ml": volume_ml,
        "surface_area_mm2": surface,
        "elongation": elongation,
    }


def radiomics_lite(vol: IntensityVolume, roi: VoxelGrid) -> tuple[dict[str, float], dict[str, float]]:
    """First-order + shape feature maps for an ROI on an intensity volume."""
    return firstorder_features(vol, roi), shape_features(roi)


@dataclass(frozen=True)
class BiomarkerSet:
    tav: float
    airway_volume_ml: float
    lung_volume_ml: float
    total_length_mm: float
    branch_count: int
    per_size_counts: dict[SizeClass, int]
    firstorder: dict[str, float] = field(default_factory=dict)
    shape: dict[str, float] = field(default_factory=dict)


def compute_biomarkers(airway: VoxelGrid, lung: VoxelGrid,
                       image: IntensityVolume | None = None,
                       prune_vox: int = 2,
                       tree: AirwayTree | None = None) -> BiomarkerSet:
    """Full biomarker panel for one case; intensity features need an image."""
    tav = compute_tav(airway, lung)
    if tree is None:
        tree = build_tree(skeletonize(airway), airway, prune_vox=prune_vox)
    per_size = {cls: len(branches) for cls, branches in tree.branches_by_class().items()}
    firstorder: dict[str, float] = {}
    shape = shape_features(airway)
    if image is not None:
        firstorder = firstorder_features(image, airway)
    voxel_ml = airway.geometry.voxel_volume_mm3 / 1000.0
    return BiomarkerSet(
        tav=tav,
        airway_volume_ml=airway.foreground_count * voxel_ml,
        lung_volume_ml=lung.foreground_count * voxel_ml,
        total_length_mm=tree.total_length_mm,
        branch_count=tree.branch_count,
        per_size_counts=per_size,
        firstorder=firstorder,
        shape=shape,
    )


def biomarker_row(case_id: str, b: BiomarkerSet) -> dict[str, str]:
    row = {
        "case_id": case_id,
        "tav": repr(b.tav),
        "airway_volume_ml": repr(b.airway_volume_ml),
        "lung_volume_ml": repr(b.lung_volume_ml),
        "total_length_mm": repr(b.total_length_mm),
        "branch_count": str(b.branch_count),
    }
    for cls in SizeClass:
        row[f"count_{cls.value}"] = str(b.per_size_counts.get(cls, 0))
    for name, value in b.shape.items():
        row[f"shape_{name}"] = repr(value)
    for name, value in b.firstorder.items():
        row[f"fo_{name}"] = repr(value)
    return row


def write_biomarkers(rows: list[dict[str, str]], path: str | Path) -> None:
    if not rows:
        return
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(rows)
