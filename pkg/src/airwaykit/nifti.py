"""Minimal NIfTI-1 reader/writer for 3D single-frame volumes.

Supports .nii and .nii.gz, little- and big-endian headers, and the datatypes
that occur in CT work (uint8, int16, uint16, float32, float64). Orientation
matrices are not interpreted: evaluation happens on the shared voxel grid.
Headers read from disk are kept verbatim and passed through on write so that
qform/sform survive a read-modify-write cycle.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    IoFailure,
    TruncatedPayload,
    UnsupportedDatatype,
)
from .volume import Geometry, IntensityVolume, VoxelGrid

HEADER_SIZE = 348
MAGIC_OFFSET = 344
MAGIC_SINGLE = b"n+1\x00"
GZIP_PREFIX = b"\x1f\x8b"

# NIfTI-1 datatype codes -> numpy dtype characters
_DTYPES = {
    2: "u1",    # uint8
    4: "i2",    # int16
    16: "f4",   # float32
    64: "f8",   # float64
    512: "u2",  # uint16
}


def _read_bytes(path: str | Path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:2] == GZIP_PREFIX:
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise IoFailure(f"corrupt gzip stream in {path}: {exc}") from exc
    return raw


def _parse_header(raw: bytes, path) -> tuple[str, tuple[int, int, int], int, tuple[float, float, float], int, float, float, bytes]:
    """Return (endian, dims, datatype, spacing, vox_offset, slope, inter, header_bytes)."""
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayload(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    header = raw[:HEADER_SIZE]
    if struct.unpack_from("<i", header, 0)[0] == HEADER_SIZE:
        endian = "<"
    elif struct.unpack_from(">i", header, 0)[0] == HEADER_SIZE:
        endian = ">"
    else:
        raise BadMagic(f"{path}: sizeof_hdr != {HEADER_SIZE}, not a NIfTI-1 file")
    if header[MAGIC_OFFSET:MAGIC_OFFSET + 4] != MAGIC_SINGLE:
        raise BadMagic(f"{path}: magic string is not 'n+1', only single-file NIfTI-1 is supported")

    dim = struct.unpack_from(endian + "8h", header, 40)
    ndim = dim[0]
    if ndim == 4 and dim[4] == 1:
        ndim = 3  # degenerate fourth axis is tolerated
    if ndim != 3:
        raise DimensionMismatch(f"{path}: dim[0] == {dim[0]} (need a 3D single-frame volume)")
    dims = (dim[1], dim[2], dim[3])
    if any(d < 1 for d in dims):
        raise DimensionMismatch(f"{path}: nonpositive axis length in dim {dims}")

    datatype = struct.unpack_from(endian + "h", header, 70)[0]
    if datatype not in _DTYPES:
        raise UnsupportedDatatype(f"{path}: datatype code {datatype} not supported")

    pixdim = struct.unpack_from(endian + "8f", header, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise DimensionMismatch(f"{path}: nonpositive pixdim {spacing}")

    vox_offset = struct.unpack_from(endian + "f", header, 108)[0]
    vox_offset = int(round(vox_offset)) if np.isfinite(vox_offset) else 0
    if vox_offset < HEADER_SIZE:
        vox_offset = HEADER_SIZE + 4

    slope, inter = struct.unpack_from(endian + "2f", header, 112)
    if not np.isfinite(slope):
        slope = 0.0
    if not np.isfinite(inter):
        inter = 0.0
    return endian, dims, datatype, spacing, vox_offset, float(slope), float(inter), header


def _read_array(path: str | Path) -> tuple[np.ndarray, Geometry, bytes]:
    raw = _read_bytes(path)
    endian, dims, datatype, spacing, vox_offset, slope, inter, header = _parse_header(raw, path)
    dtype = np.dtype(endian + _DTYPES[datatype])
    nvox = dims[0] * dims[1] * dims[2]
    nbytes = nvox * dtype.itemsize
    payload = raw[vox_offset:vox_offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedPayload(
            f"{path}: payload holds {len(payload)} bytes, header declares {nbytes}"
        )
    # disk layout is x-fastest; Fortran reshape yields arr[x, y, z]
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    arr = arr.astype(np.float64)
    if slope != 0.0 and (slope, inter) != (1.0, 0.0):
        arr = arr * slope + inter
    geom = Geometry(dims, spacing)
    return arr, geom, header if endian == "<" else b""


def read_volume(path: str | Path) -> IntensityVolume:
    """Parse a (possibly gzipped) NIfTI-1 file into an intensity volume."""
    arr, geom, header = _read_array(path)
    return IntensityVolume(geom, arr, source_header=header or None)


def read_mask(path: str | Path) -> VoxelGrid:
    """Parse a NIfTI-1 file into a binary grid, thresholding at > 0.5."""
    arr, geom, header = _read_array(path)
    return VoxelGrid(geom, arr > 0.5, source_header=header or None)


def _build_header(geometry: Geometry, datatype: int, bitpix: int,
                  source: bytes | None) -> bytearray:
    header = bytearray(source) if source and len(source) == HEADER_SIZE else bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    dim = (3,) + geometry.dims + (1, 1, 1, 1)
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<h", header, 70, datatype)
    struct.pack_into("<h", header, 72, bitpix)
    qfac = 1.0
    if source and len(source) == HEADER_SIZE:
        old = struct.unpack_from("<f", source, 76)[0]
        if old in (-1.0, 1.0):
            qfac = old
    pixdim = (qfac,) + geometry.spacing + (0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<8f", header, 76, *pixdim)
    struct.pack_into("<f", header, 108, float(HEADER_SIZE + 4))  # vox_offset
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    header[MAGIC_OFFSET:MAGIC_OFFSET + 4] = MAGIC_SINGLE
    return header


def write_mask(grid: VoxelGrid, path: str | Path) -> None:
    """Write a binary grid as uint8 NIfTI-1; gzip when the path ends in .gz."""
    header = _build_header(grid.geometry, datatype=2, bitpix=8, source=grid.source_header)
    blob = bytes(header) + b"\x00\x00\x00\x00" + grid.data.astype(np.uint8).tobytes(order="F")
    _write_blob(blob, path)


def write_volume(vol: IntensityVolume, path: str | Path) -> None:
    """Write an intensity volume as float32 NIfTI-1."""
    header = _build_header(vol.geometry, datatype=16, bitpix=32, source=vol.source_header)
    blob = bytes(header) + b"\x00\x00\x00\x00" + vol.data.astype(np.float32).tobytes(order="F")
    _write_blob(blob, path)


def _write_blob(blob: bytes, path: str | Path) -> None:
    path = Path(path)
    if path.name.endswith(".gz"):
        # mtime pinned so identical grids produce byte-identical files
        blob = gzip.compress(blob, mtime=0)
    try:
        path.write_bytes(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
