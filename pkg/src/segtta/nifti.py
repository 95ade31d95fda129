"""Reader and writer for the NIfTI-1 single-file format (.nii / .nii.gz).

Only the single-file variant (magic ``n+1\\0``) is supported, with datatype
codes 2 (uint8), 4 (int16), 16 (float32), and 64 (float64). Both byte
orders are handled; endianness is detected from dim[0], which must land in
[1, 7] for exactly one of the two orders. Orientation (qform/sform) is read
but not applied; only the pixdim voxel spacing is honored, since nothing in
this pipeline resamples.

Written files are canonical: vox_offset=352, scl_slope=1, scl_inter=0,
little-endian unless asked otherwise, and gzip members carry mtime=0 so
identical volumes produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
import gzip
from pathlib import Path

import numpy as np

from .core import LabelMask, ProbabilityMap, Spacing, Volume
from .errors import (
    CorruptHeader,
    DimensionMismatch,
    IoFailure,
    UnrepresentableValue,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
MIN_VOX_OFFSET = 352
MAGIC_SINGLE = b"n+1\x00"

DTYPE_FOR_CODE = {2: "u1", 4: "i2", 16: "f4", 64: "f8"}
BITPIX_FOR_CODE = {2: 8, 4: 16, 16: 32, 64: 64}

_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]


def _header_dtype(byteorder: str) -> np.dtype:
    return np.dtype(_FIELDS).newbyteorder(byteorder)


assert _header_dtype("<").itemsize == HEADER_SIZE


@dataclass(frozen=True)
class NiftiHeader:
    """The header fields this pipeline actually consumes."""

    dim: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    magic: bytes
    byteorder: str  # "<" or ">"

    @property
    def ndim(self) -> int:
        return self.dim[0]

    def shape(self) -> tuple[int, ...]:
        return tuple(self.dim[1 : 1 + self.ndim])


def _is_gzip(path) -> bool:
    return str(path).endswith(".gz")


def _open_read(path):
    try:
        if _is_gzip(path):
            return gzip.open(path, "rb")
        return open(path, "rb")
    except OSError as e:
        raise IoFailure(f"cannot open {path}: {e}") from e


def _parse_header(raw: bytes, path) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise CorruptHeader(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    byteorder = None
    for candidate in ("<", ">"):
        rec = np.frombuffer(raw[:HEADER_SIZE], dtype=_header_dtype(candidate))[0]
        if 1 <= int(rec["dim"][0]) <= 7:
            byteorder = candidate
            break
    if byteorder is None:
        raise CorruptHeader(f"{path}: dim[0] not in [1, 7] for either byte order")
    # numpy S-typed fields strip trailing nulls; restore the fixed width.
    magic = bytes(rec["magic"]).ljust(4, b"\x00")
    if magic != MAGIC_SINGLE:
        raise CorruptHeader(
            f"{path}: magic {magic!r} is not the single-file form {MAGIC_SINGLE!r}"
        )
    datatype = int(rec["datatype"])
    if datatype not in DTYPE_FOR_CODE:
        raise UnsupportedDatatype(
            f"{path}: datatype={datatype} not in supported codes "
            f"{sorted(DTYPE_FOR_CODE)}"
        )
    bitpix = int(rec["bitpix"])
    if bitpix != BITPIX_FOR_CODE[datatype]:
        raise CorruptHeader(
            f"{path}: bitpix={bitpix} inconsistent with datatype={datatype} "
            f"(expected {BITPIX_FOR_CODE[datatype]})"
        )
    ndim = int(rec["dim"][0])
    if ndim not in (3, 4):
        raise CorruptHeader(f"{path}: dim[0]={ndim} not in {{3, 4}}")
    dim = tuple(int(d) for d in rec["dim"])
    for i in range(1, ndim + 1):
        if dim[i] < 1:
            raise CorruptHeader(f"{path}: dim[{i}]={dim[i]} must be >= 1")
    vox_offset = float(rec["vox_offset"])
    if not (vox_offset >= MIN_VOX_OFFSET and vox_offset == int(vox_offset)):
        raise CorruptHeader(
            f"{path}: vox_offset={vox_offset} must be an integer >= {MIN_VOX_OFFSET}"
        )
    pixdim = tuple(float(p) for p in rec["pixdim"])
    for i in (1, 2, 3):
        if not (np.isfinite(pixdim[i]) and pixdim[i] > 0):
            raise CorruptHeader(f"{path}: pixdim[{i}]={pixdim[i]} must be finite and > 0")
    return NiftiHeader(
        dim=dim,
        datatype=datatype,
        bitpix=bitpix,
        pixdim=pixdim,
        vox_offset=int(vox_offset),
        scl_slope=float(rec["scl_slope"]),
        scl_inter=float(rec["scl_inter"]),
        magic=magic,
        byteorder=byteorder,
    )


def read_header(path) -> NiftiHeader:
    """Parse and validate the 348-byte header of a .nii or .nii.gz file."""
    with _open_read(path) as f:
        try:
            raw = f.read(HEADER_SIZE)
        except (OSError, gzip.BadGzipFile, EOFError) as e:
            raise IoFailure(f"cannot read header from {path}: {e}") from e
    return _parse_header(raw, path)


def _read_array(path, header: NiftiHeader) -> np.ndarray:
    """Read the data section as an array shaped per the header, [x, y, z(, c)]."""
    shape = header.shape()
    dtype = np.dtype(DTYPE_FOR_CODE[header.datatype]).newbyteorder(header.byteorder)
    count = int(np.prod(shape))
    nbytes = count * dtype.itemsize
    with _open_read(path) as f:
        try:
            f.seek(header.vox_offset)
            raw = f.read(nbytes)
        except (OSError, gzip.BadGzipFile, EOFError) as e:
            raise IoFailure(f"cannot read data from {path}: {e}") from e
    if len(raw) < nbytes:
        raise IoFailure(
            f"{path}: data section truncated ({len(raw)} of {nbytes} bytes)"
        )
    # File order is x fastest; reshape with Fortran order to index [x, y, z].
    return np.frombuffer(raw, dtype=dtype).reshape(shape, order="F")


def read_volume(path) -> Volume:
    """Read a 3D volume, applying scl_slope/scl_inter when slope is nonzero."""
    header = read_header(path)
    if header.ndim != 3:
        raise DimensionMismatch(f"{path}: dim[0]={header.ndim}, expected a 3D volume")
    arr = _read_array(path, header).astype(np.float64)
    if header.scl_slope != 0.0 and (header.scl_slope, header.scl_inter) != (1.0, 0.0):
        arr = arr * header.scl_slope + header.scl_inter
    spacing = Spacing(*header.pixdim[1:4])
    return Volume(arr, spacing, vol_id=_stem(path))


def read_label_mask(path, num_classes: int) -> LabelMask:
    """Read an integer label mask stored as any supported datatype."""
    header = read_header(path)
    if header.ndim != 3:
        raise DimensionMismatch(f"{path}: dim[0]={header.ndim}, expected a 3D mask")
    arr = _read_array(path, header)
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise ValueError(f"{path}: mask voxels are not integral")
        arr = rounded
    return LabelMask(arr.astype(np.int64), num_classes)


def read_probability_map(path) -> ProbabilityMap:
    """Read a 4D float32 probability map with dim[4] = num_classes."""
    header = read_header(path)
    if header.ndim != 4:
        raise DimensionMismatch(f"{path}: dim[0]={header.ndim}, expected a 4D map")
    if header.datatype != 16:
        raise UnsupportedDatatype(
            f"{path}: probability maps must be float32 (datatype=16), "
            f"got {header.datatype}"
        )
    arr = _read_array(path, header).astype(np.float64)
    return ProbabilityMap(arr, source_tag=_stem(path))


def _stem(path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def _build_header(
    dim: tuple[int, ...], pixdim: tuple[float, ...], datatype: int, byteorder: str
) -> bytes:
    rec = np.zeros((), dtype=_header_dtype(byteorder))
    rec["sizeof_hdr"] = HEADER_SIZE
    rec["regular"] = b"r"
    full_dim = [1] * 8
    full_dim[0] = len(dim)
    full_dim[1 : 1 + len(dim)] = dim
    rec["dim"] = full_dim
    rec["datatype"] = datatype
    rec["bitpix"] = BITPIX_FOR_CODE[datatype]
    full_pix = [0.0] * 8
    full_pix[0] = 1.0
    full_pix[1 : 1 + len(pixdim)] = pixdim
    rec["pixdim"] = full_pix
    rec["vox_offset"] = MIN_VOX_OFFSET
    rec["scl_slope"] = 1.0
    rec["scl_inter"] = 0.0
    rec["magic"] = MAGIC_SINGLE
    return rec.tobytes()


def _write_file(path, header: bytes, data: np.ndarray):
    pad = b"\x00" * (MIN_VOX_OFFSET - HEADER_SIZE)  # no extensions
    payload = header + pad + data.tobytes(order="F")
    try:
        if _is_gzip(path):
            with open(path, "wb") as raw:
                # mtime=0 keeps the compressed bytes identical across runs.
                with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
                    f.write(payload)
        else:
            with open(path, "wb") as f:
                f.write(payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _convert_for_write(arr: np.ndarray, datatype: int, clamp: bool) -> np.ndarray:
    dtype = np.dtype(DTYPE_FOR_CODE[datatype])
    if datatype in (16, 64):
        return arr.astype(dtype)
    info = np.iinfo(dtype)
    rounded = np.rint(arr)  # round half to even
    if clamp:
        rounded = np.clip(rounded, info.min, info.max)
    elif rounded.size and (rounded.min() < info.min or rounded.max() > info.max):
        bad = rounded.min() if rounded.min() < info.min else rounded.max()
        raise UnrepresentableValue(
            f"value {bad} outside [{info.min}, {info.max}] for datatype={datatype}"
        )
    return rounded.astype(dtype)


def write_volume(v: Volume, path, datatype: int = 16, clamp: bool = True,
                 byteorder: str = "<"):
    """Write a volume; integer datatypes round half-to-even then clamp.

    With ``clamp=False`` an out-of-range value raises UnrepresentableValue
    instead of being clamped.
    """
    if datatype not in DTYPE_FOR_CODE:
        raise UnsupportedDatatype(f"datatype={datatype} not in {sorted(DTYPE_FOR_CODE)}")
    data = _convert_for_write(v.data, datatype, clamp)
    data = data.astype(data.dtype.newbyteorder(byteorder))
    header = _build_header(v.dims, v.spacing.as_tuple(), datatype, byteorder)
    _write_file(path, header, data)


def write_label_mask(mask: LabelMask, spacing: Spacing, path, byteorder: str = "<"):
    """Write a label mask as a uint8 volume."""
    header = _build_header(mask.dims, spacing.as_tuple(), 2, byteorder)
    data = mask.labels.astype(np.dtype("u1").newbyteorder(byteorder))
    _write_file(path, header, data)


def write_probability_map(p: ProbabilityMap, path, byteorder: str = "<"):
    """Write a probability map as a 4D float32 file with dim[4]=num_classes."""
    dim = (*p.dims, p.num_classes)
    header = _build_header(dim, (1.0, 1.0, 1.0, 0.0), 16, byteorder)
    data = p.probs.astype(np.dtype("f4").newbyteorder(byteorder))
    _write_file(path, header, data)
