"""Controlled degradations for robustness testing: flips, noise, slice drops."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import RatioOutOfRange
from .volume import Geometry, IntensityVolume, VoxelGrid

_AXES = {"x": 0, "y": 1, "z": 2}
DEFAULT_SIGMA_HU = 50.0


class PerturbKind(str, Enum):
    FLIP_X = "flip-x"
    FLIP_Y = "flip-y"
    FLIP_Z = "flip-z"
    NOISE = "noise"
    DOWNSAMPLE = "downsample"


@dataclass(frozen=True)
class PerturbSpec:
    kind: PerturbKind
    sigma_hu: float = DEFAULT_SIGMA_HU  # noise only
    ratio: float | None = None          # downsample only; None draws from seed
    seed: int = 0

    def __post_init__(self):
        if self.kind == PerturbKind.NOISE and not self.sigma_hu > 0:
            raise ValueError("sigma_hu must be > 0 for noise")
        if self.ratio is not None and not (0.5 <= self.ratio <= 1.0):
            raise ValueError("ratio must lie in [0.5, 1]")


def flip(vol, axis: str):
    """Reverse the data along one axis; geometry is unchanged."""
    ax = _AXES[axis]
    flipped = np.flip(vol.data, axis=ax).copy()
    if isinstance(vol, VoxelGrid):
        return VoxelGrid(vol.geometry, flipped)
    return IntensityVolume(vol.geometry, flipped)


def add_noise(vol: IntensityVolume, sigma_hu: float, seed: int) -> IntensityVolume:
    """Add seeded i.i.d. zero-mean Gaussian noise to an intensity volume.

    Masks are never noised; pass them through unchanged instead.
    """
    if isinstance(vol, VoxelGrid):
        raise TypeError("noise applies to intensity volumes, not binary masks")
    if sigma_hu < 0:
        raise ValueError("sigma_hu must be >= 0")
    if sigma_hu == 0:
        return vol
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma_hu, size=vol.data.shape)
    return IntensityVolume(vol.geometry, vol.data + noise)


def downsample_indices(nz: int, ratio: float) -> np.ndarray:
    """Kept z indices: evenly spaced fractional positions rounded to the grid."""
    m = max(2, int(round(ratio * nz)))
    picks = np.round(np.linspace(0, nz - 1, m)).astype(np.int64)
    return np.unique(picks)


def resolve_ratio(ratio: float | None, seed: int) -> float:
    """Fixed ratio, or a seeded uniform draw from [0.5, 1] when None."""
    if ratio is None:
        return float(np.random.default_rng(seed).uniform(0.5, 1.0))
    return float(ratio)


def downsample_z(vol, ratio: float, seed: int = 0):
    """Drop z slices down to ``max(2, round(ratio * nz))``, keeping the extent.

    Slices are selected (never interpolated), so binary masks stay binary and
    a paired image/mask downsampled with the same ratio keeps identical slice
    sets. The z spacing is rescaled by nz/m to preserve the physical extent.
    """
    if not 0.0 < ratio <= 1.0:
        raise RatioOutOfRange(f"ratio must be in (0, 1], got {ratio}")
    nx, ny, nz = vol.geometry.dims
    if nz < 2:
        raise ValueError("need at least 2 slices to downsample")
    if ratio == 1.0:
        return vol
    keep = downsample_indices(nz, ratio)
    m = len(keep)
    sx, sy, sz = vol.geometry.spacing
    geom = Geometry((nx, ny, m), (sx, sy, sz * nz / m))
    data = vol.data[:, :, keep].copy()
    if isinstance(vol, VoxelGrid):
        return VoxelGrid(geom, data)
    return IntensityVolume(geom, data)


def apply_perturbation(obj, spec: PerturbSpec):
    """Apply a perturbation spec to a volume or mask.

    Returns (result, params) where params record what was actually applied
    (e.g. the drawn downsampling ratio) for a rerunnable manifest. For the
    noise kind, masks pass through unchanged.
    """
    if spec.kind == PerturbKind.FLIP_X:
        return flip(obj, "x"), {}
    if spec.kind == PerturbKind.FLIP_Y:
        return flip(obj, "y"), {}
    if spec.kind == PerturbKind.FLIP_Z:
        return flip(obj, "z"), {}
    if spec.kind == PerturbKind.NOISE:
        if isinstance(obj, VoxelGrid):
            return obj, {"sigma_hu": spec.sigma_hu, "applied": False}
        return add_noise(obj, spec.sigma_hu, spec.seed), {"sigma_hu": spec.sigma_hu}
    if spec.kind == PerturbKind.DOWNSAMPLE:
        ratio = resolve_ratio(spec.ratio, spec.seed)
        return downsample_z(obj, ratio, spec.seed), {"ratio": ratio}
    raise ValueError(f"unknown perturbation kind {spec.kind}")
