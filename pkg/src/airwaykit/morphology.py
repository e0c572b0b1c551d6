"""Core 3D voxel algorithms: labeling, distance transform, skeletonization.

The skeletonizer is a directional parallel thinning: each pass sweeps six
border directions, and within each direction candidates are processed in
eight 2x2x2 parity batches. Two voxels in the same parity batch are never
26-adjacent, so deleting a whole batch at once is equivalent to deleting its
voxels one by one; every deleted voxel is a simple point, so foreground and
background topology are preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask
from .volume import Geometry, VoxelGrid

Connectivity = int  # 6 or 26


@dataclass(frozen=True)
class LabelGrid:
    """Connected-component labels; 0 is background, components are 1..count."""

    geometry: Geometry
    labels: np.ndarray

    @property
    def count(self) -> int:
        return int(self.labels.max(initial=0))


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel distance (mm) to the nearest background voxel center."""

    geometry: Geometry
    dist: np.ndarray


def _structure(connectivity: Connectivity) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")


def connected_components(grid: VoxelGrid, connectivity: Connectivity = 26) -> LabelGrid:
    """Label components 1..K in first-encounter scan order (x fastest)."""
    raw, k = ndimage.label(grid.data, structure=_structure(connectivity))
    if k > 1:
        # scipy numbers components in C scan order of the array; renumber by
        # first encounter along the canonical x-fastest order instead
        flat = raw.ravel(order="F")
        nonzero = np.flatnonzero(flat)
        values, first_in_subset = np.unique(flat[nonzero], return_index=True)
        order = np.argsort(nonzero[first_in_subset], kind="stable")
        remap = np.zeros(k + 1, dtype=raw.dtype)
        remap[values[order]] = np.arange(1, k + 1)
        raw = remap[raw]
    return LabelGrid(grid.geometry, raw.astype(np.int32))


def component_count(grid: VoxelGrid, connectivity: Connectivity = 26) -> int:
    return int(ndimage.label(grid.data, structure=_structure(connectivity))[1])


def largest_component(grid: VoxelGrid, connectivity: Connectivity = 26) -> VoxelGrid:
    """Keep only the largest component; ties go to the earliest in scan order."""
    if grid.foreground_count == 0:
        raise EmptyMask("largest_component needs at least one foreground voxel")
    labeled = connected_components(grid, connectivity)
    sizes = np.bincount(labeled.labels.ravel())
    sizes[0] = 0
    winner = int(np.argmax(sizes))  # argmax takes the smallest label on ties
    return grid.replace_data(labeled.labels == winner)


def distance_transform(grid: VoxelGrid) -> DistanceField:
    """Exact anisotropic EDT; everything outside the grid counts as background."""
    padded = np.pad(grid.data, 1)
    dist = ndimage.distance_transform_edt(padded, sampling=grid.geometry.spacing)
    return DistanceField(grid.geometry, dist[1:-1, 1:-1, 1:-1])


# --- thinning -------------------------------------------------------------

def _neighbor_tables():
    offsets = np.array(
        [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
        dtype=np.int64,
    )  # cell index = (dx+1)*9 + (dy+1)*3 + (dz+1); center is 13
    adj26 = []
    for i in range(27):
        if i == 13:
            adj26.append(np.empty(0, dtype=np.int64))
            continue
        adj = [
            j for j in range(27)
            if j not in (i, 13) and np.abs(offsets[i] - offsets[j]).max() <= 1
        ]
        adj26.append(np.array(adj, dtype=np.int64))

    n18 = [i for i in range(27)
           if i != 13 and np.abs(offsets[i]).sum() <= 2]
    pos18 = {cell: k for k, cell in enumerate(n18)}
    adj6_18 = []
    for cell in n18:
        adj = [pos18[other] for other in n18
               if np.abs(offsets[cell] - offsets[other]).sum() == 1]
        adj6_18.append(np.array(adj, dtype=np.int64))

    faces = [i for i in range(27) if np.abs(offsets[i]).sum() == 1]
    face_in18 = np.array([pos18[f] for f in faces], dtype=np.int64)
    return offsets, adj26, np.array(n18, dtype=np.int64), adj6_18, face_in18


_OFFSETS, _ADJ26, _N18, _ADJ6_18, _FACE_IN18 = _neighbor_tables()
_CELL_IDX = np.arange(27, dtype=np.int8)
_IDX18 = np.arange(18, dtype=np.int8)


def _propagate_min(labels: np.ndarray, active: np.ndarray, adjacency) -> None:
    """In-place min-label propagation over a fixed small graph, to fixpoint."""
    while True:
        changed = False
        for c in range(labels.shape[1]):
            adj = adjacency[c]
            if adj.size == 0:
                continue
            m = labels[:, adj].min(axis=1)
            upd = active[:, c] & (m < labels[:, c])
            if upd.any():
                labels[upd, c] = m[upd]
                changed = True
        if not changed:
            return


def _simple_and_degree(nbhd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Simple-point test on stacked 27-cell neighborhoods.

    A voxel is simple iff its foreground neighbors form exactly one
    26-component and the background in its 18-neighborhood forms exactly one
    6-component touching a face neighbor. Also returns the 26-neighbor count.
    """
    fg = nbhd.astype(bool)
    fg[:, 13] = False
    degree = fg.sum(axis=1)

    labels = np.where(fg, _CELL_IDX[None, :], np.int8(27))
    _propagate_min(labels, fg, _ADJ26)
    t26 = ((labels == _CELL_IDX[None, :]) & fg).sum(axis=1)

    bg18 = ~nbhd[:, _N18].astype(bool)
    lab6 = np.where(bg18, _IDX18[None, :], np.int8(18))
    _propagate_min(lab6, bg18, _ADJ6_18)
    face_lab = np.where(bg18[:, _FACE_IN18], lab6[:, _FACE_IN18], np.int8(-1))
    t6 = np.zeros(nbhd.shape[0], dtype=np.int64)
    for i in range(6):
        fresh = face_lab[:, i] >= 0
        for j in range(i):
            fresh &= face_lab[:, j] != face_lab[:, i]
        t6 += fresh

    return (t26 == 1) & (t6 == 1), degree


# subiteration order: +z, -z, +y, -y, +x, -x
_DIRECTIONS = [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]
_PARITIES = [(px, py, pz) for px in (0, 1) for py in (0, 1) for pz in (0, 1)]


def _gather_neighborhoods(vol: np.ndarray, xs, ys, zs) -> np.ndarray:
    return vol[
        xs[:, None] + _OFFSETS[None, :, 0],
        ys[:, None] + _OFFSETS[None, :, 1],
        zs[:, None] + _OFFSETS[None, :, 2],
    ]


def _canonical_flips(data: np.ndarray) -> tuple[bool, bool, bool]:
    """Axis flips that bring the foreground centroid into the lower half.

    Exact centroid ties fall back to a lexicographic byte comparison, so the
    result is a pure function of the geometry: any axis reflection of the
    input maps to the same canonical volume.
    """
    idx = np.nonzero(data)
    n = idx[0].size
    flips = []
    for ax in range(3):
        s = int(idx[ax].sum())
        reflected = (data.shape[ax] - 1) * n - s
        if s != reflected:
            flips.append(s > reflected)
        else:
            flipped = np.flip(data, axis=ax)
            flips.append(flipped.tobytes() < data.tobytes())
    return tuple(flips)


def skeletonize(grid: VoxelGrid) -> VoxelGrid:
    """Thin a mask to a one-voxel curve skeleton, preserving topology.

    Runs to fixpoint; endpoints (voxels with a single 26-neighbor) and
    isolated voxels are never removed, so thinning is idempotent and keeps
    the 26-component count of the input. Orientation is canonicalized
    internally, so skeletonize(flip(g)) == flip(skeletonize(g)) whenever no
    axis reflection maps the cropped mask onto itself; exactly symmetric
    masks thin in one canonical orientation instead.
    """
    if grid.foreground_count == 0:
        raise EmptyMask("skeletonize needs a non-empty mask")

    idx = np.nonzero(grid.data)
    lo = [int(a.min()) for a in idx]
    hi = [int(a.max()) + 1 for a in idx]
    cropped = grid.data[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    flips = _canonical_flips(cropped)
    flip_axes = tuple(ax for ax in range(3) if flips[ax])
    if flip_axes:
        cropped = np.flip(cropped, axis=flip_axes)
    vol = np.pad(cropped, 1)

    while True:
        deleted_any = False
        for d in _DIRECTIONS:
            # border voxels: foreground with a background face-neighbor in d
            core = vol[1:-1, 1:-1, 1:-1]
            shifted = vol[
                1 + d[0]:vol.shape[0] - 1 + d[0],
                1 + d[1]:vol.shape[1] - 1 + d[1],
                1 + d[2]:vol.shape[2] - 1 + d[2],
            ]
            border = (core == 1) & (shifted == 0)
            for px, py, pz in _PARITIES:
                sub = border[px::2, py::2, pz::2]
                bi, bj, bk = np.nonzero(sub)
                if bi.size == 0:
                    continue
                xs = bi * 2 + px + 1
                ys = bj * 2 + py + 1
                zs = bk * 2 + pz + 1
                nbhd = _gather_neighborhoods(vol, xs, ys, zs)
                simple, degree = _simple_and_degree(nbhd)
                kill = simple & (degree >= 2)
                if kill.any():
                    vol[xs[kill], ys[kill], zs[kill]] = 0
                    # keep the border mask honest within this direction
                    border[xs[kill] - 1, ys[kill] - 1, zs[kill] - 1] = False
                    deleted_any = True
        if not deleted_any:
            break

    result = vol[1:-1, 1:-1, 1:-1]
    if flip_axes:
        result = np.flip(result, axis=flip_axes)
    out = np.zeros_like(grid.data)
    out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = result
    return grid.replace_data(out)


def neighbor_counts(mask: np.ndarray) -> np.ndarray:
    """Number of foreground 26-neighbors for every voxel of a binary array."""
    kernel = np.ones((3, 3, 3), dtype=np.uint8)
    kernel[1, 1, 1] = 0
    return ndimage.convolve(mask.astype(np.uint8), kernel, mode="constant", output=np.uint8)
