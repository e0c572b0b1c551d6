"""Branch graph extracted from a skeleton: branches, junctions, size classes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import EmptySkeleton, NegativeRadius, NotThin
from .morphology import connected_components, distance_transform, neighbor_counts
from .volume import Geometry, VoxelGrid, require_aligned


class SizeClass(str, Enum):
    TERMINAL = "terminal"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


def classify_size(radius_mm: float) -> SizeClass:
    """Map a branch radius (mm) to its size class.

    Half-open bins [0,2), [2,4), [4,8), [8,inf); boundary radii go to the
    larger class.
    """
    if radius_mm < 0:
        raise NegativeRadius(f"radius must be >= 0, got {radius_mm}")
    if radius_mm < 2.0:
        return SizeClass.TERMINAL
    if radius_mm < 4.0:
        return SizeClass.SMALL
    if radius_mm < 8.0:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


@dataclass(frozen=True)
class Branch:
    id: int
    voxels: np.ndarray  # (n, 3) ordered centerline voxel indices
    length_mm: float
    radius_mm: float
    size_class: SizeClass
    endpoints: tuple[int, int]  # node ids; equal for loop branches

    @property
    def voxel_count(self) -> int:
        return len(self.voxels)


@dataclass(frozen=True)
class Node:
    id: int
    kind: str  # "junction" or "endpoint"
    voxels: np.ndarray  # (k, 3); a single voxel for endpoints


@dataclass(frozen=True)
class AirwayTree:
    geometry: Geometry
    branches: list[Branch]
    nodes: list[Node]

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def total_length_mm(self) -> float:
        return float(sum(b.length_mm for b in self.branches))

    def branches_by_class(self) -> dict[SizeClass, list[Branch]]:
        out: dict[SizeClass, list[Branch]] = {}
        for b in self.branches:
            out.setdefault(b.size_class, []).append(b)
        return out


def path_length_mm(voxels: np.ndarray, spacing: tuple[float, float, float]) -> float:
    """Sum of inter-center distances along an ordered voxel path."""
    if len(voxels) < 2:
        return 0.0
    steps = np.diff(voxels.astype(np.float64), axis=0) * np.asarray(spacing)
    return float(np.sqrt((steps ** 2).sum(axis=1)).sum())


def voxel_length_weights(voxels: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Per-voxel share of the path length: half of each incident segment.

    Weights sum exactly to the path length; a single-voxel path weighs 0.
    """
    n = len(voxels)
    if n < 2:
        return np.zeros(n)
    steps = np.diff(voxels.astype(np.float64), axis=0) * np.asarray(spacing)
    seg = np.sqrt((steps ** 2).sum(axis=1))
    w = np.zeros(n)
    w[:-1] += seg / 2.0
    w[1:] += seg / 2.0
    return w


def _scan_key(v: tuple[int, int, int]):
    # x-fastest linear order
    return (v[2], v[1], v[0])


def _order_path(component: list, adjacency: dict) -> list:
    """Order the voxels of a simple path or cycle component."""
    if len(component) == 1:
        return list(component)
    comp_set = set(component)
    deg_in = {v: sum(1 for u in adjacency[v] if u in comp_set) for v in component}
    ends = sorted((v for v in component if deg_in[v] <= 1), key=_scan_key)
    # a component with no internal ends is a pure cycle
    start = ends[0] if ends else min(component, key=_scan_key)
    ordered = [start]
    seen = {start}
    current = start
    while True:
        nxt = [u for u in adjacency[current] if u in comp_set and u not in seen]
        if not nxt:
            break
        current = nxt[0]  # thin path: at most one unseen continuation
        ordered.append(current)
        seen.add(current)
    return ordered


@dataclass
class _RawBranch:
    voxels: list
    endpoints: tuple[int, int]
    kinds: tuple[str, str]


@dataclass
class _Decomposition:
    raw_branches: list
    nodes: list


def _decompose(data: np.ndarray, geometry: Geometry) -> _Decomposition:
    degree = neighbor_counts(data)
    if np.any((data == 1) & (degree > 26)):
        raise NotThin("degree exceeds 26; input is not a valid skeleton")

    junction_mask = (data == 1) & (degree >= 3)
    path_mask = (data == 1) & ~junction_mask

    grid = VoxelGrid(geometry, data)
    if junction_mask.any():
        junction_labels = connected_components(grid.replace_data(junction_mask), 26).labels
    else:
        junction_labels = np.zeros_like(data, dtype=np.int32)
    n_junctions = int(junction_labels.max(initial=0))
    nodes = [Node(id=j, kind="junction", voxels=np.argwhere(junction_labels == j))
             for j in range(1, n_junctions + 1)]

    if path_mask.any():
        path_labels = connected_components(grid.replace_data(path_mask), 26).labels
    else:
        path_labels = np.zeros_like(data, dtype=np.int32)
    n_paths = int(path_labels.max(initial=0))

    offsets = [(dx, dy, dz)
               for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
               if (dx, dy, dz) != (0, 0, 0)]
    nx, ny, nz = geometry.dims

    def skel_neighbors(v):
        out = []
        for dx, dy, dz in offsets:
            x, y, z = v[0] + dx, v[1] + dy, v[2] + dz
            if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz and data[x, y, z]:
                out.append((x, y, z))
        return out

    comp_voxels: dict[int, list] = {}
    for x, y, z in np.argwhere(path_mask):
        comp_voxels.setdefault(int(path_labels[x, y, z]), []).append((int(x), int(y), int(z)))

    raw_branches = []
    next_node = n_junctions + 1

    def new_endpoint(voxel) -> int:
        nonlocal next_node
        nodes.append(Node(id=next_node, kind="endpoint", voxels=np.array([voxel])))
        next_node += 1
        return next_node - 1

    for comp_id in range(1, n_paths + 1):
        component = comp_voxels[comp_id]
        adjacency = {v: skel_neighbors(v) for v in component}
        ordered = _order_path(component, adjacency)

        if len(ordered) == 1:
            v = ordered[0]
            junction_neighbors = [u for u in adjacency[v] if junction_labels[u] > 0]
            clusters = sorted({int(junction_labels[u]) for u in junction_neighbors})
            if not clusters:
                e = new_endpoint(v)  # isolated voxel
                endpoints, kinds = (e, e), ("endpoint", "endpoint")
            elif len(clusters) >= 2:
                endpoints = (clusters[0], clusters[1])  # one-voxel bridge
                kinds = ("junction", "junction")
            elif len(junction_neighbors) >= 2:
                endpoints = (clusters[0], clusters[0])  # one-voxel loop onto a cluster
                kinds = ("junction", "junction")
            else:
                endpoints = (clusters[0], new_endpoint(v))  # one-voxel burr
                kinds = ("junction", "endpoint")
            raw_branches.append(_RawBranch(ordered, endpoints, kinds))
            continue

        ends, kinds = [], []
        for end_voxel in (ordered[0], ordered[-1]):
            touching = sorted({int(junction_labels[u]) for u in adjacency[end_voxel]
                               if junction_labels[u] > 0})
            if touching:
                ends.append(touching[0])
                kinds.append("junction")
            else:
                ends.append(new_endpoint(end_voxel))
                kinds.append("endpoint")
        raw_branches.append(_RawBranch(ordered, (ends[0], ends[1]), (kinds[0], kinds[1])))

    return _Decomposition(raw_branches=raw_branches, nodes=nodes)


def build_tree(skeleton: VoxelGrid, mask: VoxelGrid, prune_vox: int = 2) -> AirwayTree:
    """Decompose a skeleton into branches between junction/endpoint nodes.

    Voxels with >= 3 skeleton neighbors form junction clusters; every other
    skeleton voxel belongs to exactly one branch. Junction-to-endpoint
    branches with fewer than ``prune_vox`` voxels are treated as thinning
    burrs: removed, and the decomposition rebuilt once. Branch radius is the
    median of the mask's distance transform sampled along the centerline.
    """
    if skeleton.foreground_count == 0:
        raise EmptySkeleton("cannot build a tree from an empty skeleton")
    require_aligned(skeleton, mask, "skeleton and mask")
    if np.any(skeleton.data > mask.data):
        raise ValueError("skeleton must be a subset of the mask")

    # Work on the mask bounding box plus one background ring. The ring
    # preserves the distance transform exactly at every foreground voxel
    # (the nearest background position clamps into the ring), and all voxel
    # coordinates are shifted back afterwards.
    spacing = skeleton.geometry.spacing
    idx = np.nonzero(mask.data)
    lo = np.array([max(int(a.min()) - 1, 0) for a in idx])
    hi = [min(int(a.max()) + 2, dim) for a, dim in zip(idx, skeleton.geometry.dims)]
    window = tuple(slice(l, h) for l, h in zip(lo, hi))
    crop_geom = Geometry(tuple(h - l for l, h in zip(lo, hi)), spacing)
    crop_mask = VoxelGrid(crop_geom, mask.data[window])
    edt = distance_transform(crop_mask).dist

    data = skeleton.data[window].copy()
    decomposition = _decompose(data, crop_geom)
    burrs = [
        b for b in decomposition.raw_branches
        if len(b.voxels) < prune_vox and set(b.kinds) == {"junction", "endpoint"}
    ]
    if burrs:
        for b in burrs:
            vox = np.array(b.voxels)
            data[vox[:, 0], vox[:, 1], vox[:, 2]] = 0
        decomposition = _decompose(data, crop_geom)

    branches = []
    for i, raw in enumerate(decomposition.raw_branches, start=1):
        vox = np.array(raw.voxels)
        length = path_length_mm(vox, spacing)
        radius = float(np.median(edt[vox[:, 0], vox[:, 1], vox[:, 2]]))
        branches.append(Branch(
            id=i,
            voxels=vox + lo,
            length_mm=length,
            radius_mm=radius,
            size_class=classify_size(radius),
            endpoints=raw.endpoints,
        ))
    nodes = [Node(id=n.id, kind=n.kind, voxels=n.voxels + lo)
             for n in decomposition.nodes]
    return AirwayTree(skeleton.geometry, branches, nodes)


def write_branch_table(tree: AirwayTree, path: str | Path) -> None:
    """Branch table CSV: id, length, radius, size class, endpoint coordinates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "id", "length_mm", "radius_mm", "size_class", "voxel_count",
            "start_x", "start_y", "start_z", "end_x", "end_y", "end_z",
        ])
        for b in tree.branches:
            first, last = b.voxels[0], b.voxels[-1]
            writer.writerow([
                b.id, repr(b.length_mm), repr(b.radius_mm), b.size_class.value,
                b.voxel_count, *map(int, first), *map(int, last),
            ])
