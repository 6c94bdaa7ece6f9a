"""NIfTI-1 single-file reader/writer.

Implements the 348-byte NIfTI-1 header (magic ``n+1\\0``) for the three
datatype codes the pipeline needs: 2 (uint8, label maps), 4 (int16) and
16 (float32, image volumes). Files may be gzip-compressed; compression is
detected from the 0x1f 0x8b magic, not the filename. Byte order is detected
by reading sizeof_hdr both ways.

Orientation (qform/sform) is ignored beyond pixdim: the pipeline operates
slice-wise in the acquisition frame. Sequence kind and patient id, which
NIfTI-1 has no fields for, are stashed in intent_name and descrip
(``pid=...``) by the writer and recovered by the reader; foreign files fall
back to a caller-supplied default sequence.
"""

from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cmrforge.errors import NiftiParseError
from cmrforge.image import ALL_LABELS, LabelMap, SequenceKind, Volume
from cmrforge.manifest import read_manifest, write_manifest  # re-export  # noqa: F401

log = logging.getLogger(__name__)

HEADER_SIZE = 348
DATA_OFFSET = 352
MAGIC = b"n+1\x00"

SUPPORTED_DATATYPES = {2: np.uint8, 4: np.int16, 16: np.float32}

# field -> (byte offset, struct definition); offsets per the NIfTI-1 standard
_HEADER_FIELDS = [
    ("sizeof_hdr", "i4", ()),        # 0
    ("data_type", "S10", ()),        # 4 (unused)
    ("db_name", "S18", ()),          # 14 (unused)
    ("extents", "i4", ()),           # 32 (unused)
    ("session_error", "i2", ()),     # 36 (unused)
    ("regular", "S1", ()),           # 38 (unused)
    ("dim_info", "u1", ()),          # 39
    ("dim", "i2", (8,)),             # 40
    ("intent_p1", "f4", ()),         # 56
    ("intent_p2", "f4", ()),         # 60
    ("intent_p3", "f4", ()),         # 64
    ("intent_code", "i2", ()),       # 68
    ("datatype", "i2", ()),          # 70
    ("bitpix", "i2", ()),            # 72
    ("slice_start", "i2", ()),       # 74
    ("pixdim", "f4", (8,)),          # 76
    ("vox_offset", "f4", ()),        # 108
    ("scl_slope", "f4", ()),         # 112
    ("scl_inter", "f4", ()),         # 116
    ("slice_end", "i2", ()),         # 120
    ("slice_code", "u1", ()),        # 122
    ("xyzt_units", "u1", ()),        # 123
    ("cal_max", "f4", ()),           # 124
    ("cal_min", "f4", ()),           # 128
    ("slice_duration", "f4", ()),    # 132
    ("toffset", "f4", ()),           # 136
    ("glmax", "i4", ()),             # 140
    ("glmin", "i4", ()),             # 144
    ("descrip", "S80", ()),          # 148
    ("aux_file", "S24", ()),         # 228
    ("qform_code", "i2", ()),        # 252
    ("sform_code", "i2", ()),        # 254
    ("quatern_b", "f4", ()),         # 256
    ("quatern_c", "f4", ()),         # 260
    ("quatern_d", "f4", ()),         # 264
    ("qoffset_x", "f4", ()),         # 268
    ("qoffset_y", "f4", ()),         # 272
    ("qoffset_z", "f4", ()),         # 276
    ("srow_x", "f4", (4,)),          # 280
    ("srow_y", "f4", (4,)),          # 296
    ("srow_z", "f4", (4,)),          # 312
    ("intent_name", "S16", ()),      # 328
    ("magic", "S4", ()),             # 344
]

_HEADER_DTYPE = np.dtype([(name, code, shape) for name, code, shape in _HEADER_FIELDS])
assert _HEADER_DTYPE.itemsize == HEADER_SIZE

FIELD_OFFSETS = {name: _HEADER_DTYPE.fields[name][1] for name in _HEADER_DTYPE.names}


@dataclass(frozen=True)
class NiftiHeader:
    """Decoded subset of a NIfTI-1 header used by this pipeline."""

    dims: tuple[int, ...]
    datatype: int
    pixdim: tuple[float, ...]
    scl_slope: float
    scl_inter: float
    vox_offset: int
    byte_order: str  # "<" or ">"
    descrip: str = ""
    intent_name: str = ""


def _read_bytes(path):
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
        rest = f.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _detect_byte_order(raw, path):
    if len(raw) < HEADER_SIZE:
        raise NiftiParseError(
            f"file too short for the 348-byte NIfTI-1 header ({len(raw)} bytes)",
            field="sizeof_hdr", offset=0, path=path)
    for order in ("<", ">"):
        if int(np.frombuffer(raw, dtype=f"{order}i4", count=1)[0]) == HEADER_SIZE:
            return order
    raise NiftiParseError(
        "sizeof_hdr is not 348 in either byte order; not a NIfTI-1 file",
        field="sizeof_hdr", offset=0, path=path)


def _parse_header(raw, path):
    order = _detect_byte_order(raw, path)
    rec = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE.newbyteorder(order))[0]

    magic = raw[FIELD_OFFSETS["magic"] : FIELD_OFFSETS["magic"] + 4]
    if magic != MAGIC:
        raise NiftiParseError(
            f"bad magic {magic!r}, expected {MAGIC!r} (single-file NIfTI-1)",
            field="magic", offset=FIELD_OFFSETS["magic"], path=path)

    ndim = int(rec["dim"][0])
    if not 1 <= ndim <= 7:
        raise NiftiParseError(f"dim[0] = {ndim} outside [1, 7]",
                              field="dim", offset=FIELD_OFFSETS["dim"], path=path)
    dims = tuple(int(d) for d in rec["dim"][1 : 1 + ndim])
    if any(d < 1 for d in dims):
        raise NiftiParseError(f"non-positive dimension in dim[1..{ndim}] = {dims}",
                              field="dim", offset=FIELD_OFFSETS["dim"], path=path)
    if any(d != 1 for d in dims[3:]):
        raise NiftiParseError(
            f"volumes beyond 3D are not supported (dim = {dims})",
            field="dim", offset=FIELD_OFFSETS["dim"], path=path)

    datatype = int(rec["datatype"])
    if datatype not in SUPPORTED_DATATYPES:
        raise NiftiParseError(
            f"unsupported datatype code {datatype} (supported: {sorted(SUPPORTED_DATATYPES)})",
            field="datatype", offset=FIELD_OFFSETS["datatype"], path=path)

    vox_offset = int(rec["vox_offset"])
    if vox_offset < DATA_OFFSET:
        raise NiftiParseError(f"vox_offset {vox_offset} below the single-file minimum {DATA_OFFSET}",
                              field="vox_offset", offset=FIELD_OFFSETS["vox_offset"], path=path)

    return NiftiHeader(
        dims=dims,
        datatype=datatype,
        pixdim=tuple(float(p) for p in rec["pixdim"]),
        scl_slope=float(rec["scl_slope"]),
        scl_inter=float(rec["scl_inter"]),
        vox_offset=vox_offset,
        byte_order=order,
        descrip=bytes(rec["descrip"]).rstrip(b"\x00").decode("ascii", "replace"),
        intent_name=bytes(rec["intent_name"]).rstrip(b"\x00").decode("ascii", "replace"),
    )


def _spacing_from_pixdim(header):
    spacing = []
    for axis in range(3):
        s = header.pixdim[axis + 1] if axis < len(header.dims) or axis < 3 else 0.0
        if not np.isfinite(s) or s <= 0:
            log.warning("pixdim[%d] = %s is not a usable spacing; falling back to 1.0 mm", axis + 1, s)
            s = 1.0
        spacing.append(float(s))
    return tuple(spacing)


def _shape3(header):
    dims = header.dims + (1, 1)
    return dims[0], dims[1], dims[2]


def _decode_metadata(header, default_sequence):
    sequence = default_sequence
    try:
        sequence = SequenceKind.from_name(header.intent_name)
    except Exception:
        pass
    patient_id = ""
    if header.descrip.startswith("pid="):
        patient_id = header.descrip[4:]
    return sequence, patient_id


def read_volume(path, *, as_labels=None, remap=None, default_sequence=SequenceKind.LGE):
    """Read a single-file NIfTI-1 volume.

    Returns ``(Volume | LabelMap, NiftiHeader)``. uint8 files come back as
    LabelMap unless ``as_labels=False``; other dtypes as Volume unless
    ``as_labels=True``. ``remap`` is an external->internal label-code table
    applied before validation against {0,1,2,3}.
    """
    raw = _read_bytes(path)
    header = _parse_header(raw, path)
    shape = _shape3(header)

    np_dtype = np.dtype(SUPPORTED_DATATYPES[header.datatype]).newbyteorder(header.byte_order)
    expected = int(np.prod(shape)) * np_dtype.itemsize
    available = len(raw) - header.vox_offset
    if available < expected:
        raise NiftiParseError(
            f"data section truncated (dim/file-size mismatch): dims {shape} require "
            f"{expected} bytes but only {max(available, 0)} are present",
            field="data", offset=header.vox_offset, path=path)

    section = raw[header.vox_offset : header.vox_offset + expected]
    data = np.frombuffer(section, dtype=np_dtype).reshape(shape, order="F")

    if as_labels is None:
        as_labels = header.datatype == 2
    spacing = _spacing_from_pixdim(header)

    if as_labels:
        labels = np.asarray(data)
        if labels.dtype.kind == "f":
            rounded = np.rint(labels)
            if np.max(np.abs(labels - rounded)) > 1e-3:
                raise NiftiParseError("label file holds non-integer values",
                                      field="data", offset=header.vox_offset, path=path)
            labels = rounded
        labels = labels.astype(np.int64)
        if remap:
            remapped = labels.copy()
            for ext, internal in remap.items():
                remapped[labels == int(ext)] = int(internal)
            labels = remapped
        bad = np.setdiff1d(np.unique(labels), np.asarray(ALL_LABELS))
        if bad.size:
            raise NiftiParseError(
                f"label values {bad.tolist()} outside {{0,1,2,3}}; pass a remap table",
                field="data", offset=header.vox_offset, path=path)
        return LabelMap(labels.astype(np.uint8), spacing), header

    values = data.astype(np.float32)
    if header.scl_slope != 0.0 and (header.scl_slope != 1.0 or header.scl_inter != 0.0):
        values = values * np.float32(header.scl_slope) + np.float32(header.scl_inter)
    sequence, patient_id = _decode_metadata(header, default_sequence)
    return Volume(values, spacing, sequence, patient_id), header


def read_labels(path, *, remap=None):
    """Read a label map regardless of on-disk datatype."""
    labels, header = read_volume(path, as_labels=True, remap=remap)
    return labels, header


def _build_header_bytes(data, spacing, descrip, intent_name, datatype):
    rec = np.zeros((), dtype=_HEADER_DTYPE.newbyteorder("<"))
    rec["sizeof_hdr"] = HEADER_SIZE
    rec["dim"] = [3, data.shape[0], data.shape[1], data.shape[2], 1, 1, 1, 1]
    rec["datatype"] = datatype
    rec["bitpix"] = np.dtype(SUPPORTED_DATATYPES[datatype]).itemsize * 8
    rec["pixdim"] = [1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0]
    rec["vox_offset"] = DATA_OFFSET
    rec["scl_slope"] = 1.0
    rec["scl_inter"] = 0.0
    rec["xyzt_units"] = 2  # millimetres
    rec["descrip"] = descrip.encode("ascii", "replace")[:79]
    rec["intent_name"] = intent_name.encode("ascii", "replace")[:15]
    rec["magic"] = MAGIC
    return rec.tobytes() + b"\x00\x00\x00\x00"  # no extensions


def write_volume(v, path):
    """Write a Volume (float32) or LabelMap (uint8) as single-file NIfTI-1.

    Little-endian, scl_slope=1, scl_inter=0, vox_offset=352. ``.gz`` paths
    are gzip-compressed deterministically (mtime=0) so identical inputs give
    byte-identical files.
    """
    path = Path(path)
    if isinstance(v, LabelMap):
        data = v.data.astype(np.uint8, copy=False)
        header = _build_header_bytes(data, v.spacing, "", "", datatype=2)
    elif isinstance(v, Volume):
        data = v.data.astype(np.float32, copy=False)
        header = _build_header_bytes(data, v.spacing, f"pid={v.patient_id}" if v.patient_id else "",
                                     v.sequence.value, datatype=16)
    else:
        raise TypeError(f"expected Volume or LabelMap, got {type(v).__name__}")

    payload = header + np.asfortranarray(data).tobytes(order="F")
    try:
        if path.suffix == ".gz":
            with open(path, "wb") as f:
                with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                    gz.write(payload)
        else:
            with open(path, "wb") as f:
                f.write(payload)
    except OSError as e:
        raise OSError(f"failed to write NIfTI file {path}: {e}") from e
