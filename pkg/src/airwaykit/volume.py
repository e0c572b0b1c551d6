"""Geometry-aware volume containers.

Arrays are indexed ``[x, y, z]``; the canonical linear order of the data is
x-fastest (Fortran order of these arrays), matching the on-disk layout of the
file format in :mod:`airwaykit.nifti`. Scan order throughout the toolkit means
that x-fastest linear order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatch


@dataclass(frozen=True)
class Geometry:
    """Grid dimensions and physical voxel spacing in mm along x, y, z."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        if len(self.spacing) != 3 or any(not (s > 0) for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def aligned_with(self, other: "Geometry") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing


def require_aligned(a, b, what: str = "volumes") -> None:
    """Raise GeometryMismatch unless the two volumes share dims and spacing."""
    ga = a.geometry if hasattr(a, "geometry") else a
    gb = b.geometry if hasattr(b, "geometry") else b
    if not ga.aligned_with(gb):
        raise GeometryMismatch(
            f"{what} are not aligned: dims {ga.dims} vs {gb.dims}, "
            f"spacing {ga.spacing} vs {gb.spacing}"
        )


@dataclass(frozen=True)
class VoxelGrid:
    """Binary 3D mask on an anisotropic grid. data values are exactly 0 or 1."""

    geometry: Geometry
    data: np.ndarray
    # Raw header carried along when the grid came from a file, so writes can
    # pass orientation fields through untouched. Never interpreted.
    source_header: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.shape != self.geometry.dims:
            raise ValueError(f"data shape {arr.shape} != dims {self.geometry.dims}")
        arr = (arr != 0).astype(np.uint8)
        object.__setattr__(self, "data", arr)

    @property
    def foreground_count(self) -> int:
        return int(self.data.sum())

    def replace_data(self, data: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.geometry, data, self.source_header)


@dataclass(frozen=True)
class IntensityVolume:
    """Scalar 3D volume (Hounsfield units) on an anisotropic grid."""

    geometry: Geometry
    data: np.ndarray
    source_header: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.shape != self.geometry.dims:
            raise ValueError(f"data shape {arr.shape} != dims {self.geometry.dims}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("intensity volume contains non-finite values")
        object.__setattr__(self, "data", arr)

    def replace_data(self, data: np.ndarray) -> "IntensityVolume":
        return IntensityVolume(self.geometry, data, self.source_header)

