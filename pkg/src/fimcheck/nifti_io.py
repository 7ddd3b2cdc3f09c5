"""Minimal NIfTI-1 reader/writer.

Only the single-file ``n+1`` layout with int16 or float32 voxels is read.
Spatial transforms (qform/sform) are ignored: every volume is assumed to use
the fixed storage convention described by :data:`ORIENTATION`.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

HEADER_SIZE = 348
DATA_OFFSET = 352  # header + 4-byte extension flag

DT_INT16 = 4
DT_FLOAT32 = 16
_BITPIX = {DT_INT16: 16, DT_FLOAT32: 32}
_DTYPE_CHAR = {DT_INT16: "i2", DT_FLOAT32: "f4"}

MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# byte offsets inside the 348-byte header
_OFF_SIZEOF_HDR = 0
_OFF_DIM = 40
_OFF_DATATYPE = 70
_OFF_BITPIX = 72
_OFF_PIXDIM = 76
_OFF_VOX_OFFSET = 108
_OFF_SCL_SLOPE = 112
_OFF_SCL_INTER = 116
_OFF_MAGIC = 344


class NiftiError(Exception):
    """Base class for NIfTI parse/write failures."""


class BadMagic(NiftiError):
    pass


class BadHeaderSize(NiftiError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class BadRank(NiftiError):
    pass


class InvalidHeader(NiftiError):
    """Header fields that are individually parseable but inconsistent."""


class PairedFileUnsupported(NiftiError):
    """``ni1`` header with a separate ``.img`` data file."""


class TruncatedData(NiftiError):
    pass


class NonFiniteSample(NiftiError):
    def __init__(self, index, frame, value):
        self.index = index
        self.frame = frame
        self.value = value
        i, j, k = index
        super().__init__(
            f"non-finite sample {value!r} at voxel ({i},{j},{k}) frame {frame} "
            f"[one-based ({i + 1},{j + 1},{k + 1}) frame {frame + 1}]"
        )


class DimMismatch(NiftiError):
    pass


class IoFailure(NiftiError):
    pass


class IndexOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class AnatomicalLabel:
    """Direction of increasing index along each storage axis."""

    x_sense: Tuple[str, str] = ("right", "left")
    y_sense: Tuple[str, str] = ("anterior", "posterior")
    z_sense: Tuple[str, str] = ("superior", "inferior")

    def describe(self) -> str:
        return (
            f"x: {self.x_sense[0]} to {self.x_sense[1]} (rows), "
            f"y: {self.y_sense[0]} to {self.y_sense[1]} (slices), "
            f"z: {self.z_sense[0]} to {self.z_sense[1]} (volumes)"
        )


ORIENTATION = AnatomicalLabel()


@dataclass(frozen=True)
class NiftiHeader:
    sizeof_hdr: int
    dim: Tuple[int, ...]
    datatype_code: int
    bitpix: int
    scl_slope: float
    scl_inter: float
    vox_offset: float
    magic: bytes
    endianness: str  # "little" or "big"
    raw: bytes = field(default=b"", repr=False, compare=False)

    @property
    def rank(self) -> int:
        return self.dim[0]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.dim[1 : self.dim[0] + 1])

    @property
    def spatial_dims(self) -> Tuple[int, int, int]:
        d = list(self.shape[:3]) + [1] * (3 - min(3, len(self.shape)))
        return (d[0], d[1], d[2])

    @property
    def nt(self) -> int:
        return self.shape[3] if len(self.shape) >= 4 else 1

    @property
    def dtype(self) -> np.dtype:
        order = "<" if self.endianness == "little" else ">"
        return np.dtype(order + _DTYPE_CHAR[self.datatype_code])


@dataclass(frozen=True)
class VolumeGrid4D:
    """4D sample grid indexed ``samples[i, j, k, t]``.

    ``i`` varies fastest on disk, then ``j``, ``k`` and ``t``.
    """

    dims: Tuple[int, int, int, int]
    samples: np.ndarray = field(repr=False)
    orientation: AnatomicalLabel = ORIENTATION
    header: Optional[NiftiHeader] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.dims) != 4 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be four positive integers, got {self.dims}")
        if self.samples.shape != tuple(self.dims):
            raise ValueError(f"samples shape {self.samples.shape} does not match dims {self.dims}")

    @property
    def nvox(self) -> int:
        nx, ny, nz, _ = self.dims
        return nx * ny * nz

    @property
    def nt(self) -> int:
        return self.dims[3]

    def series(self, i: int, j: int, k: int) -> np.ndarray:
        return self.samples[i, j, k, :]

    def voxel_matrix(self) -> np.ndarray:
        """(nvox, nt) view; row ``v`` is voxel ``i + nx*(j + ny*k)``."""
        return self.samples.reshape(self.nvox, self.nt, order="F")


def flat_to_ijk(v: int, dims) -> Tuple[int, int, int]:
    nx, ny = dims[0], dims[1]
    return (int(v % nx), int((v // nx) % ny), int(v // (nx * ny)))


def ijk_to_flat(index, dims) -> int:
    i, j, k = index
    return int(i + dims[0] * (j + dims[1] * k))


def _unpack(fmt: str, data: bytes, offset: int, order: str):
    return struct.unpack_from(order + fmt, data, offset)


def parse_header(data: bytes) -> NiftiHeader:
    """Parse the first 348 bytes of a NIfTI-1 file.

    Byte order is inferred from ``dim[0]``: little-endian is tried first and
    big-endian is used when the little-endian reading is not a valid rank.
    """
    if len(data) < HEADER_SIZE:
        raise TruncatedData(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    data = bytes(data[:HEADER_SIZE])

    magic = data[_OFF_MAGIC : _OFF_MAGIC + 4]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise BadMagic(f"unrecognised magic {magic!r}")

    sizes = {o: _unpack("i", data, _OFF_SIZEOF_HDR, c)[0] for o, c in (("little", "<"), ("big", ">"))}
    if HEADER_SIZE not in sizes.values():
        raise BadHeaderSize(f"sizeof_hdr is not {HEADER_SIZE} in either byte order")

    endianness = None
    for name, c in (("little", "<"), ("big", ">")):
        if 1 <= _unpack("h", data, _OFF_DIM, c)[0] <= 7:
            endianness = name
            break
    if endianness is None:
        raise BadRank("dim[0] is outside 1..7 in both byte orders")
    order = "<" if endianness == "little" else ">"
    if sizes[endianness] != HEADER_SIZE:
        raise BadHeaderSize(
            f"sizeof_hdr={sizes[endianness]} under the {endianness}-endian reading implied by dim[0]"
        )

    dim = _unpack("8h", data, _OFF_DIM, order)
    datatype, bitpix = _unpack("2h", data, _OFF_DATATYPE, order)
    vox_offset, scl_slope, scl_inter = _unpack("3f", data, _OFF_VOX_OFFSET, order)

    if datatype not in _BITPIX:
        raise UnsupportedDatatype(f"datatype code {datatype} (supported: 4=int16, 16=float32)")
    if bitpix != _BITPIX[datatype]:
        raise InvalidHeader(f"bitpix {bitpix} inconsistent with datatype {datatype}")
    if any(d < 1 for d in dim[1 : dim[0] + 1]):
        raise InvalidHeader(f"non-positive dimension in {dim[1:dim[0] + 1]}")
    if magic == MAGIC_SINGLE and not vox_offset >= HEADER_SIZE:
        raise InvalidHeader(f"vox_offset {vox_offset} < {HEADER_SIZE} for single-file layout")

    return NiftiHeader(
        sizeof_hdr=HEADER_SIZE,
        dim=tuple(int(d) for d in dim),
        datatype_code=int(datatype),
        bitpix=int(bitpix),
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        vox_offset=float(vox_offset),
        magic=magic,
        endianness=endianness,
        raw=data,
    )


def _volume_dims(hdr: NiftiHeader) -> Tuple[int, int, int, int]:
    shape = list(hdr.shape)
    if len(shape) > 4:
        if any(d != 1 for d in shape[4:]):
            raise BadRank(f"rank {hdr.rank} volumes with non-singleton extra dims are not supported")
        shape = shape[:4]
    shape += [1] * (4 - len(shape))
    return tuple(shape)  # type: ignore[return-value]


def decode_volume(data: bytes) -> VolumeGrid4D:
    hdr = parse_header(data)
    if hdr.magic == MAGIC_PAIR:
        raise PairedFileUnsupported("header/image file pairs ('ni1') are not supported")
    dims = _volume_dims(hdr)
    count = int(np.prod(dims))
    offset = int(hdr.vox_offset)
    nbytes = count * hdr.bitpix // 8
    if len(data) - offset < nbytes:
        raise TruncatedData(
            f"expected {nbytes} data bytes at offset {offset}, found {max(0, len(data) - offset)}"
        )
    raw = np.frombuffer(data, dtype=hdr.dtype, count=count, offset=offset)
    values = raw.astype(np.float64)
    slope = hdr.scl_slope
    if slope != 0 and np.isfinite(slope):
        values = slope * values + hdr.scl_inter

    bad = ~np.isfinite(values)
    if bad.any():
        f = int(np.flatnonzero(bad)[0])
        nvox = dims[0] * dims[1] * dims[2]
        raise NonFiniteSample(flat_to_ijk(f % nvox, dims), f // nvox, float(values[f]))

    samples = values.reshape(dims, order="F")
    samples.flags.writeable = False
    return VolumeGrid4D(dims=dims, samples=samples, header=hdr)


def read_volume(path) -> VolumeGrid4D:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_volume(data)


def _base_header(template: Optional[NiftiHeader], endianness: str) -> Tuple[bytearray, str]:
    if template is not None:
        endianness = template.endianness
        if len(template.raw) == HEADER_SIZE:
            return bytearray(template.raw), ("<" if endianness == "little" else ">")
    order = "<" if endianness == "little" else ">"
    buf = bytearray(HEADER_SIZE)
    struct.pack_into(order + "8f", buf, _OFF_PIXDIM, *([1.0] * 8))
    return buf, order


def encode_volume(
    samples: np.ndarray,
    *,
    datatype: int = DT_FLOAT32,
    endianness: str = "little",
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
    template: Optional[NiftiHeader] = None,
) -> bytes:
    """Serialize a 3D or 4D array (indexed ``[i, j, k(, t)]``) as ``n+1`` bytes.

    With a template the template's remaining header bytes (pixdim, qform, ...)
    and byte order are kept; ``endianness`` is then ignored.
    """
    samples = np.asarray(samples)
    if samples.ndim not in (3, 4):
        raise ValueError("samples must be 3D or 4D")
    if datatype not in _BITPIX:
        raise UnsupportedDatatype(f"datatype code {datatype}")
    buf, order = _base_header(template, endianness)

    dim = [samples.ndim] + list(samples.shape) + [1] * (7 - samples.ndim)
    struct.pack_into(order + "i", buf, _OFF_SIZEOF_HDR, HEADER_SIZE)
    struct.pack_into(order + "8h", buf, _OFF_DIM, *dim)
    struct.pack_into(order + "2h", buf, _OFF_DATATYPE, datatype, _BITPIX[datatype])
    struct.pack_into(order + "3f", buf, _OFF_VOX_OFFSET, float(DATA_OFFSET), scl_slope, scl_inter)
    buf[_OFF_MAGIC : _OFF_MAGIC + 4] = MAGIC_SINGLE

    dtype = np.dtype(order + _DTYPE_CHAR[datatype])
    if datatype == DT_INT16:
        if not np.array_equal(samples, np.round(samples)) or samples.min() < -32768 or samples.max() > 32767:
            raise ValueError("int16 output requires integral values in [-32768, 32767]")
    body = np.asarray(samples, dtype=dtype).tobytes(order="F")
    return bytes(buf) + b"\x00" * (DATA_OFFSET - HEADER_SIZE) + body


def _atomic_write(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_volume(volume: VolumeGrid4D, path, *, datatype=DT_FLOAT32, endianness="little",
                 scl_slope=0.0, scl_inter=0.0):
    payload = encode_volume(volume.samples, datatype=datatype, endianness=endianness,
                            scl_slope=scl_slope, scl_inter=scl_inter)
    _atomic_write(path, payload)


def sidecar_path(path) -> Path:
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".nii") else path.name
    return path.with_name(stem + "_undefined.txt")


def write_map(cmap, template: NiftiHeader, path) -> Path:
    """Write a correlation map as a float32 3D volume plus its sidecar.

    Undefined voxels are stored as 0 and listed, zero-based, one ``i j k``
    triple per line, in the sidecar file returned by this function.
    """
    if tuple(cmap.dims) != tuple(template.spatial_dims):
        raise DimMismatch(f"map dims {tuple(cmap.dims)} != template spatial dims {template.spatial_dims}")
    values = np.where(cmap.defined, cmap.values, 0.0)
    _atomic_write(path, encode_volume(values, template=template))

    lines = [f"{i} {j} {k}\n" for i, j, k in cmap.undefined_indices()]
    side = sidecar_path(path)
    _atomic_write(side, "".join(lines).encode("ascii"))
    return side


def read_sidecar(path):
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            i, j, k = (int(t) for t in line.split())
            out.append((i, j, k))
    return out


def _axis_phrase(idx: int, n: int, senses: Tuple[str, str], extremes: Tuple[str, str], axis: str) -> str:
    if idx == 0:
        return extremes[0]
    if idx == n - 1:
        return extremes[1]
    twice = 2 * idx
    if twice < n - 1:
        return f"{senses[0]} of {axis} centre"
    if twice > n - 1:
        return f"{senses[1]} of {axis} centre"
    return f"{axis} centre"


def voxel_to_anatomical(index, dims) -> str:
    """Describe where a zero-based voxel sits in the body.

    >>> voxel_to_anatomical((0, 0, 0), (64, 64, 28))
    'rightmost, most anterior, most superior'
    """
    i, j, k = (int(x) for x in index)
    nx, ny, nz = (int(x) for x in dims[:3])
    for name, v, n in (("i", i, nx), ("j", j, ny), ("k", k, nz)):
        if not 0 <= v < n:
            raise IndexOutOfRange(f"{name}={v} outside 0..{n - 1}")
    o = ORIENTATION
    return ", ".join(
        (
            _axis_phrase(i, nx, o.x_sense, ("rightmost", "leftmost"), "left-right"),
            _axis_phrase(j, ny, o.y_sense, ("most anterior", "most posterior"), "anterior-posterior"),
            _axis_phrase(k, nz, o.z_sense, ("most superior", "most inferior"), "superior-inferior"),
        )
    )


def format_index(index) -> str:
    i, j, k = index
    return f"({i},{j},{k}) [one-based ({i + 1},{j + 1},{k + 1})]"
