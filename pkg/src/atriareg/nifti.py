"""Minimal NIfTI-1 single-file reader/writer.

Supported subset: little-endian, magic ``n+1``, datatypes uint8 (2),
int16 (4) and float32 (16), optional gzip.  Writes are atomic: data goes
to a temporary file in the target directory which is then renamed.

Layout conventions:

* 3D volumes are float32, masks are uint8 with values {0, 1}.
* Displacement fields are 4D with ``dim[4] = 3`` (the component axis),
  ``intent_code`` DISPVECT and the units recorded in ``descrip``.
* Any other 4D file is read as a :class:`CineSeries`.
"""

from __future__ import annotations

import gzip
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from .errors import BadMagic, IoFailure, NonFiniteData, TruncatedFile, UnsupportedDatatype
from .transform import MM, VOXEL, DisplacementField
from .volume import CineSeries, Mask3, Volume3

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte empty extension block
MAGIC = b"n+1\0"

DT_UINT8, DT_INT16, DT_FLOAT32 = 2, 4, 16
_DTYPES = {DT_UINT8: np.dtype("<u1"), DT_INT16: np.dtype("<i2"), DT_FLOAT32: np.dtype("<f4")}
INTENT_DISPVECT = 1006
NIFTI_UNITS_MM = 2
FIELD_DESCRIP = "displacement, {} units"

HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "<i4"),
    ("session_error", "<i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "<i2", (8,)),
    ("intent_p1", "<f4"),
    ("intent_p2", "<f4"),
    ("intent_p3", "<f4"),
    ("intent_code", "<i2"),
    ("datatype", "<i2"),
    ("bitpix", "<i2"),
    ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)),
    ("vox_offset", "<f4"),
    ("scl_slope", "<f4"),
    ("scl_inter", "<f4"),
    ("slice_end", "<i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "<f4"),
    ("cal_min", "<f4"),
    ("slice_duration", "<f4"),
    ("toffset", "<f4"),
    ("glmax", "<i4"),
    ("glmin", "<i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "<i2"),
    ("sform_code", "<i2"),
    ("quatern_b", "<f4"),
    ("quatern_c", "<f4"),
    ("quatern_d", "<f4"),
    ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"),
    ("qoffset_z", "<f4"),
    ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)),
    ("srow_z", "<f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
])
assert HEADER_DTYPE.itemsize == HEADER_SIZE

PathLike = Union[str, os.PathLike]
NiftiObject = Union[Volume3, Mask3, DisplacementField, CineSeries]


# -- header -------------------------------------------------------------------------

def make_header(shape, datatype: int, spacing, origin, descrip: str = "", intent_code: int = 0) -> np.ndarray:
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.ones(8, dtype=np.int16)
    dim[0] = len(shape)
    dim[1:1 + len(shape)] = shape
    hdr["dim"] = dim
    hdr["intent_code"] = intent_code
    hdr["datatype"] = datatype
    hdr["bitpix"] = _DTYPES[datatype].itemsize * 8
    pixdim = np.ones(8, dtype=np.float32)
    pixdim[1:4] = spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["xyzt_units"] = NIFTI_UNITS_MM
    hdr["descrip"] = descrip.encode("ascii")
    # scanner-aligned axes: identity rotation, origin as the offset
    hdr["qform_code"] = 1
    hdr["sform_code"] = 1
    hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = origin
    for row, name in enumerate(("srow_x", "srow_y", "srow_z")):
        srow = np.zeros(4, dtype=np.float32)
        srow[row] = spacing[row]
        srow[3] = origin[row]
        hdr[name] = srow
    if intent_code == INTENT_DISPVECT:
        hdr["intent_name"] = b"displacement"
    hdr["magic"] = MAGIC
    return hdr


def parse_header(raw: bytes) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFile(f"file holds {len(raw)} bytes, fewer than a header")
    size = int.from_bytes(raw[:4], "little", signed=True)
    if size != HEADER_SIZE:
        if int.from_bytes(raw[:4], "big", signed=True) == HEADER_SIZE:
            raise BadMagic("big-endian NIfTI files are not supported")
        raise BadMagic(f"sizeof_hdr is {size}, expected {HEADER_SIZE}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"header cut short at {len(raw)} of {HEADER_SIZE} bytes")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    # structured "S4" strips trailing NULs, so compare the raw bytes
    if raw[344:348] != MAGIC:
        raise BadMagic(f"magic is {raw[344:348]!r}, expected {MAGIC!r}")
    return hdr


# -- reading --------------------------------------------------------------------------

def _load_bytes(path: PathLike) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise TruncatedFile(f"corrupt gzip stream in {path}: {exc}") from exc
    return raw


def read_nifti(path: PathLike) -> NiftiObject:
    raw = _load_bytes(path)
    hdr = parse_header(raw)
    datatype = int(hdr["datatype"])
    if datatype not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {datatype} is outside the supported subset (2, 4, 16)")
    dim = hdr["dim"]
    ndim = int(dim[0])
    if not 3 <= ndim <= 4:
        raise UnsupportedDatatype(f"only 3D and 4D images are supported, got dim[0] = {ndim}")
    shape = tuple(int(n) for n in dim[1:1 + ndim])
    if min(shape) < 1:
        raise TruncatedFile(f"non-positive dimension in {shape}")
    dtype = _DTYPES[datatype]
    offset = int(hdr["vox_offset"])
    nbytes = int(np.prod(shape)) * dtype.itemsize
    if offset < HEADER_SIZE or len(raw) < offset + nbytes:
        raise TruncatedFile(f"expected {nbytes} data bytes at offset {offset}, file has {len(raw)} bytes")
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset).reshape(shape, order="F")

    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    scaled = slope != 0.0 and (slope != 1.0 or inter != 0.0)
    if not all(np.isfinite([slope, inter])):
        raise NonFiniteData("non-finite scl_slope/scl_inter")
    spacing = tuple(float(p) for p in hdr["pixdim"][1:4])
    origin = (float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"]))

    if datatype == DT_UINT8 and not scaled and ndim == 3 and np.all(data <= 1):
        return Mask3(data.astype(bool), spacing, origin)

    values = data.astype(np.float64)
    if scaled:
        values = values * slope + inter
    if not np.all(np.isfinite(values)):
        raise NonFiniteData(f"{path} contains NaN or infinite voxels")

    if ndim == 3:
        return Volume3(values, spacing, origin)
    if int(hdr["intent_code"]) == INTENT_DISPVECT and shape[3] == 3:
        descrip = hdr["descrip"].decode("ascii", errors="replace")
        units = MM if descrip == FIELD_DESCRIP.format(MM) else VOXEL
        return DisplacementField(np.moveaxis(values, 3, 0), spacing, origin, units)
    return CineSeries(tuple(Volume3(values[..., t], spacing, origin) for t in range(shape[3])))


# -- writing --------------------------------------------------------------------------

def _encode(obj: NiftiObject):
    """Return (header, data array in (x, y, z[, t]) order, numpy dtype)."""
    if isinstance(obj, Mask3):
        arr = obj.data.astype(np.uint8)
        return make_header(arr.shape, DT_UINT8, obj.spacing, obj.origin), arr
    if isinstance(obj, Volume3):
        arr = obj.data.astype(np.float32)
        return make_header(arr.shape, DT_FLOAT32, obj.spacing, obj.origin), arr
    if isinstance(obj, DisplacementField):
        arr = np.moveaxis(obj.data, 0, 3).astype(np.float32)
        hdr = make_header(arr.shape, DT_FLOAT32, obj.spacing, obj.origin,
                          FIELD_DESCRIP.format(obj.units), INTENT_DISPVECT)
        return hdr, arr
    if isinstance(obj, CineSeries):
        first = obj.phases[0]
        arr = np.stack([p.data for p in obj.phases], axis=3).astype(np.float32)
        return make_header(arr.shape, DT_FLOAT32, first.spacing, first.origin), arr
    raise TypeError(f"cannot write {type(obj).__name__} as NIfTI")


def nifti_bytes(obj: NiftiObject, compress: bool = False) -> bytes:
    hdr, arr = _encode(obj)
    payload = hdr.tobytes() + b"\0" * (VOX_OFFSET - HEADER_SIZE) + arr.tobytes(order="F")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    return payload


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    path = Path(path)
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        tmp = None
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


def write_nifti(obj: NiftiObject, path: PathLike) -> None:
    """Write ``obj``; a ``.gz`` suffix selects gzip compression."""
    atomic_write_bytes(path, nifti_bytes(obj, compress=str(path).endswith(".gz")))
