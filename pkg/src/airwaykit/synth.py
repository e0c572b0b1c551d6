"""Deterministic synthetic airway-like volumes with known branch topology.

Trees are unions of straight tubes rasterized by an exact distance-to-segment
test in voxel units; the generator emits the true per-branch centerline,
length and radius so metric tests can check against closed-form expectations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import OutOfBounds
from .volume import Geometry, VoxelGrid


@dataclass(frozen=True)
class TreeSpec:
    """Parameters of a synthetic bifurcating tube tree.

    The default ``lattice`` direction mode restricts branch directions to
    unit lattice diagonals, so the digital centerline of every branch has
    exactly its Euclidean length (no staircase inflation) and recovered
    branch lengths are directly comparable to the recorded truth. The
    ``free`` mode rotates children by ``branch_angle_deg`` instead.
    """

    depth: int = 2
    trunk_length: float = 48.0      # voxels
    trunk_radius: float = 2.0       # voxels
    length_decay: float = 1.0
    radius_decay: float = 0.8
    branch_angle_deg: float = 38.0  # free mode only
    direction_mode: str = "lattice"
    dims: tuple[int, int, int] = (192, 192, 192)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    @property
    def expected_branch_count(self) -> int:
        return 2 ** (self.depth + 1) - 1

    @property
    def expected_junction_count(self) -> int:
        return 2 ** self.depth - 1


@dataclass(frozen=True)
class TrueBranch:
    id: int
    parent: int | None
    level: int
    start: np.ndarray  # voxel coordinates, float
    end: np.ndarray
    radius_vox: float
    length_mm: float
    radius_mm: float

    @property
    def is_leaf_level(self) -> bool:
        return False  # resolved by the generator through parent links


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _lateral_axis(direction: np.ndarray, level: int) -> np.ndarray:
    # alternate split planes per level so siblings spread in 3D
    base = np.array([1.0, 0.0, 0.0]) if level % 2 == 0 else np.array([0.0, 1.0, 0.0])
    lateral = base - np.dot(base, direction) * direction
    norm = np.linalg.norm(lateral)
    if norm < 1e-9:
        base = np.array([0.0, 1.0, 0.0]) if level % 2 == 0 else np.array([1.0, 0.0, 0.0])
        lateral = base - np.dot(base, direction) * direction
        norm = np.linalg.norm(lateral)
    return lateral / norm


def _tube_voxels(shape, p0: np.ndarray, p1: np.ndarray, radius: float,
                 cap0: bool = True, cap1: bool = True) -> np.ndarray:
    """Boolean grid of voxels within ``radius`` of segment p0-p1 (voxel units).

    Ends are spherical caps by default; a flat end (cap=False) cuts the tube
    off at the segment endpoint so the mask extent matches the true length.
    """
    lo = np.floor(np.minimum(p0, p1) - radius - 1).astype(int)
    hi = np.ceil(np.maximum(p0, p1) + radius + 1).astype(int) + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, shape)
    out = np.zeros(shape, dtype=bool)
    if np.any(lo >= hi):
        return out
    xs, ys, zs = np.meshgrid(*(np.arange(lo[i], hi[i]) for i in range(3)), indexing="ij")
    pts = np.stack([xs, ys, zs], axis=-1).astype(np.float64)
    seg = p1 - p0
    seg_len2 = float(seg @ seg)
    if seg_len2 == 0:
        inside = ((pts - p0) ** 2).sum(axis=-1) <= radius * radius
    else:
        t_raw = ((pts - p0) @ seg) / seg_len2
        t = np.clip(t_raw, 0.0, 1.0)
        nearest = p0 + t[..., None] * seg
        inside = ((pts - nearest) ** 2).sum(axis=-1) <= radius * radius
        if not cap0:
            inside &= t_raw >= 0.0
        if not cap1:
            inside &= t_raw <= 1.0
    out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = inside
    return out


# children of each lattice direction: split in x first, then y, then spread
_LATTICE_CHILDREN = {
    (0, 0, 1): ((1, 0, 1), (-1, 0, 1)),
    (1, 0, 1): ((1, 1, 1), (1, -1, 1)),
    (-1, 0, 1): ((-1, 1, 1), (-1, -1, 1)),
    (1, 1, 1): ((0, 1, 1), (1, 0, 1)),
    (1, -1, 1): ((0, -1, 1), (1, 0, 1)),
    (-1, 1, 1): ((0, 1, 1), (-1, 0, 1)),
    (-1, -1, 1): ((0, -1, 1), (-1, 0, 1)),
    (0, 1, 1): ((1, 1, 1), (-1, 1, 1)),
    (0, -1, 1): ((1, -1, 1), (-1, -1, 1)),
}


def _children_directions(direction: np.ndarray, lattice_dir: tuple | None,
                         level: int, angle: float, mode: str):
    if mode == "lattice":
        if lattice_dir not in _LATTICE_CHILDREN:
            raise ValueError(f"no lattice children for direction {lattice_dir}")
        out = []
        for child in _LATTICE_CHILDREN[lattice_dir]:
            out.append((_unit(np.array(child, dtype=np.float64)), child))
        return out
    lateral = _lateral_axis(direction, level)
    return [
        (_unit(math.cos(angle) * direction + sign * math.sin(angle) * lateral), None)
        for sign in (1.0, -1.0)
    ]


def _layout_branches(spec: TreeSpec) -> list[TrueBranch]:
    if spec.direction_mode not in ("lattice", "free"):
        raise ValueError("direction_mode must be 'lattice' or 'free'")
    spacing = np.asarray(spec.spacing)
    angle = math.radians(spec.branch_angle_deg)
    root_start = np.array([spec.dims[0] / 2.0, spec.dims[1] / 2.0,
                           3.0 + math.ceil(spec.trunk_radius)])
    branches: list[TrueBranch] = []
    next_id = 1

    def emit(start, direction, lattice_dir, level, parent) -> None:
        nonlocal next_id
        length = spec.trunk_length * spec.length_decay ** level
        radius = max(1.0, spec.trunk_radius * spec.radius_decay ** level)
        end = start + direction * length
        length_mm = float(np.linalg.norm((end - start) * spacing))
        branches.append(TrueBranch(
            id=next_id, parent=parent, level=level,
            start=start.copy(), end=end.copy(),
            radius_vox=radius, length_mm=length_mm,
            radius_mm=radius * float(spec.spacing[0]),
        ))
        my_id = next_id
        next_id += 1
        if level < spec.depth:
            for child_dir, child_lattice in _children_directions(
                    direction, lattice_dir, level, angle, spec.direction_mode):
                emit(end, child_dir, child_lattice, level + 1, my_id)

    emit(root_start, np.array([0.0, 0.0, 1.0]), (0, 0, 1), 0, None)
    return branches


def generate_tree(spec: TreeSpec) -> tuple[VoxelGrid, list[TrueBranch]]:
    """Rasterize the tree described by ``spec``; returns (mask, branch truth)."""
    branches = _layout_branches(spec)
    shape = spec.dims
    for b in branches:
        for point in (b.start, b.end):
            if np.any(point - b.radius_vox < 0.5) or np.any(point + b.radius_vox > np.array(shape) - 1.5):
                raise OutOfBounds(
                    f"branch {b.id} at {point} with radius {b.radius_vox} "
                    f"does not fit in grid {shape}"
                )
    mask = np.zeros(shape, dtype=bool)
    for b in branches:
        mask |= _tube_voxels(shape, b.start, b.end, b.radius_vox)
    return VoxelGrid(Geometry(spec.dims, spec.spacing), mask), branches


def leaf_ids(branches: list[TrueBranch]) -> list[int]:
    parents = {b.parent for b in branches if b.parent is not None}
    return [b.id for b in branches if b.id not in parents]


def match_branches(tree, truth: list[TrueBranch]) -> list[tuple[TrueBranch, object]]:
    """Greedily pair each true branch with the recovered branch nearest its midpoint."""
    pairs = []
    used: set[int] = set()
    for t in truth:
        mid = (t.start + t.end) / 2.0
        best, best_d = None, float("inf")
        for b in tree.branches:
            if b.id in used:
                continue
            d = float(np.min(((b.voxels - mid) ** 2).sum(axis=1)))
            if d < best_d:
                best_d, best = d, b
        used.add(best.id)
        pairs.append((t, best))
    return pairs


@dataclass(frozen=True)
class CorruptionResult:
    grid: VoxelGrid
    mode: str
    branch_id: int | None
    voxels_changed: int
    fraction: float | None = None


def _others_union(shape, branches: list[TrueBranch], skip_id: int) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for b in branches:
        if b.id != skip_id:
            out |= _tube_voxels(shape, b.start, b.end, b.radius_vox)
    return out


def corrupt(mask: VoxelGrid, branches: list[TrueBranch], mode: str, seed: int = 0,
            branch_id: int | None = None, fraction: float = 0.15,
            blob_radius: float = 3.0) -> CorruptionResult:
    """Apply one failure mode to a generated mask.

    erase-branch removes a whole branch tube (minus overlap with the rest of
    the tree, so the other branches stay intact); add-leak-blob adds a sphere
    disjoint from the mask; break-segment clears a mid-branch slab covering
    ``fraction`` of the branch. Branch choice defaults to a seeded leaf for
    erase and a seeded branch for break.
    """
    rng = np.random.default_rng(seed)
    shape = mask.geometry.dims
    data = mask.data.astype(bool)

    if mode == "erase-branch":
        if branch_id is None:
            branch_id = int(rng.choice(leaf_ids(branches)))
        target = next(b for b in branches if b.id == branch_id)
        tube = _tube_voxels(shape, target.start, target.end, target.radius_vox)
        erase = tube & ~_others_union(shape, branches, branch_id)
        out = data & ~erase
        return CorruptionResult(mask.replace_data(out), mode, branch_id,
                                int(erase.sum()))

    if mode == "add-leak-blob":
        r = blob_radius
        for _ in range(1000):
            center = rng.uniform(r + 1, np.array(shape) - r - 2)
            blob = _tube_voxels(shape, center, center, r)
            if not (blob & data).any():
                out = data | blob
                return CorruptionResult(mask.replace_data(out), mode, None,
                                        int(blob.sum()))
        raise OutOfBounds("no free space for a leak blob")

    if mode == "break-segment":
        if branch_id is None:
            branch_id = int(rng.integers(1, len(branches) + 1))
        target = next(b for b in branches if b.id == branch_id)
        mid0 = target.start + (target.end - target.start) * (0.5 - fraction / 2)
        mid1 = target.start + (target.end - target.start) * (0.5 + fraction / 2)
        slab = _tube_voxels(shape, mid0, mid1, target.radius_vox + 0.6)
        erase = slab & ~_others_union(shape, branches, branch_id)
        out = data & ~erase
        return CorruptionResult(mask.replace_data(out), mode, branch_id,
                                int(erase.sum()), fraction=fraction)

    raise ValueError(f"unknown corruption mode {mode!r}")


def write_true_branches(branches: list[TrueBranch], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "parent", "level", "start_x", "start_y", "start_z",
                         "end_x", "end_y", "end_z", "radius_vox", "length_mm", "radius_mm"])
        for b in branches:
            writer.writerow([
                b.id, b.parent if b.parent is not None else "", b.level,
                *(repr(float(v)) for v in b.start), *(repr(float(v)) for v in b.end),
                repr(b.radius_vox), repr(b.length_mm), repr(b.radius_mm),
            ])
