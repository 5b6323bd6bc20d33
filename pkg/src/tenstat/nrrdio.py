"""NRRD volume files: tensor fields, masks, and scalar maps.

One container format for everything on disk.  Tensor volumes store six
values per voxel in file order (Dxx, Dxy, Dxz, Dyy, Dyz, Dzz), or seven
with a leading confidence value whose threshold 0.5 separates in-mask from
out-of-mask voxels; masks are uint8 scalars; statistic/p/TFCE maps are
float64 scalars tagged with their kind in the header.  Writes are always
little-endian with a fixed header field order, so identical arrays produce
identical files.  Raw and gzip encodings are supported, with the data
attached after the header or detached into a sidecar file (``.nhdr``
headers).
"""

from __future__ import annotations

import gzip
import math
from pathlib import Path

import numpy as np

_MAGIC = "NRRD"
_WRITE_MAGIC = "NRRD0004"

# File order is (Dxx, Dxy, Dxz, Dyy, Dyz, Dzz); embedded order is
# (D11, D22, D33, sqrt2*D12, sqrt2*D13, sqrt2*D23), so embedded component
# e lives at file position _EMB_TO_FILE[e].
_EMB_TO_FILE = (0, 3, 5, 1, 2, 4)
_SQRT2 = math.sqrt(2.0)

_TYPE_TO_DTYPE = {
    "uint8": "u1",
    "uchar": "u1",
    "unsigned char": "u1",
    "uint8_t": "u1",
    "int8": "i1",
    "signed char": "i1",
    "int8_t": "i1",
    "short": "i2",
    "short int": "i2",
    "int16": "i2",
    "int16_t": "i2",
    "ushort": "u2",
    "unsigned short": "u2",
    "uint16": "u2",
    "uint16_t": "u2",
    "int": "i4",
    "signed int": "i4",
    "int32": "i4",
    "int32_t": "i4",
    "uint": "u4",
    "unsigned int": "u4",
    "uint32": "u4",
    "uint32_t": "u4",
    "longlong": "i8",
    "int64": "i8",
    "int64_t": "i8",
    "ulonglong": "u8",
    "uint64": "u8",
    "uint64_t": "u8",
    "float": "f4",
    "double": "f8",
}

_DTYPE_TO_TYPE = {
    np.dtype(np.uint8): "uint8",
    np.dtype(np.int8): "int8",
    np.dtype(np.int16): "int16",
    np.dtype(np.uint16): "uint16",
    np.dtype(np.int32): "int32",
    np.dtype(np.uint32): "uint32",
    np.dtype(np.int64): "int64",
    np.dtype(np.uint64): "uint64",
    np.dtype(np.float32): "float",
    np.dtype(np.float64): "double",
}


class FormatError(ValueError):
    """A volume file that cannot be read or written as declared."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _spacing_triple(values: list[float], path: Path) -> tuple[float, float, float]:
    if len(values) != 3:
        raise FormatError(f"{path}: expected 3 spatial spacings, got {len(values)}")
    if any(not math.isfinite(v) or v <= 0 for v in values):
        raise FormatError(f"{path}: spacings must be positive and finite, got {values}")
    return (values[0], values[1], values[2])


def _write(
    path: Path,
    sizes: list[int],
    dtype: np.dtype,
    payload: bytes,
    spacings: list[float],
    kinds: list[str],
    key_values: dict[str, str],
    encoding: str,
) -> None:
    if encoding not in ("raw", "gzip"):
        raise FormatError(f"unsupported encoding {encoding!r}; use 'raw' or 'gzip'")
    type_name = _DTYPE_TO_TYPE.get(np.dtype(dtype))
    if type_name is None:
        raise FormatError(f"no NRRD type for dtype {dtype}")

    lines = [
        _WRITE_MAGIC,
        f"type: {type_name}",
        f"dimension: {len(sizes)}",
        "sizes: " + " ".join(str(s) for s in sizes),
        f"encoding: {encoding}",
        "endian: little",
        "spacings: " + " ".join(_fmt(s) for s in spacings),
        "kinds: " + " ".join(kinds),
    ]
    for key in sorted(key_values):
        lines.append(f"{key}:={key_values[key]}")

    blob = gzip.compress(payload, 9, mtime=0) if encoding == "gzip" else payload
    detached = path.suffix == ".nhdr"
    if detached:
        data_name = path.stem + (".raw.gz" if encoding == "gzip" else ".raw")
        lines.append(f"data file: {data_name}")
        header = "\n".join(lines) + "\n"
        path.write_bytes(header.encode("ascii"))
        (path.parent / data_name).write_bytes(blob)
    else:
        header = "\n".join(lines) + "\n\n"
        path.write_bytes(header.encode("ascii") + blob)


def _parse_header(text: str, path: Path) -> tuple[dict[str, str], dict[str, str]]:
    lines = text.split("\n")
    if not lines[0].startswith(_MAGIC):
        raise FormatError(f"{path}: not an NRRD file (magic line is {lines[0][:20]!r})")
    fields: dict[str, str] = {}
    key_values: dict[str, str] = {}
    for line in lines[1:]:
        line = line.rstrip("\r")
        if not line or line.startswith("#"):
            continue
        if ":=" in line:
            key, _, value = line.partition(":=")
            key_values[key.strip()] = value.strip()
        elif ": " in line:
            key, _, value = line.partition(": ")
            fields[key.strip().lower()] = value.strip()
        else:
            raise FormatError(f"{path}: malformed header line {line!r}")
    return fields, key_values


def _read(path: Path) -> tuple[list[int], np.ndarray, dict[str, str], dict[str, str]]:
    """Returns (sizes fastest-first, flat data array, fields, key/value pairs)."""
    raw = path.read_bytes()
    sep = raw.find(b"\n\n")
    header_bytes = raw if sep < 0 else raw[:sep]
    try:
        header_text = header_bytes.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: header is not ASCII text") from exc
    fields, key_values = _parse_header(header_text, path)

    for required in ("type", "dimension", "sizes", "encoding"):
        if required not in fields:
            raise FormatError(f"{path}: header is missing required field {required!r}")

    base = _TYPE_TO_DTYPE.get(fields["type"])
    if base is None:
        raise FormatError(f"{path}: unsupported type {fields['type']!r}")

    try:
        dimension = int(fields["dimension"])
        sizes = [int(s) for s in fields["sizes"].split()]
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer dimension or sizes") from exc
    if dimension != len(sizes) or any(s < 1 for s in sizes):
        raise FormatError(f"{path}: dimension {dimension} does not match sizes {sizes}")

    itemsize = np.dtype(base).itemsize
    byte_order = "<"
    if itemsize > 1:
        endian = fields.get("endian")
        if endian not in ("little", "big"):
            raise FormatError(f"{path}: multi-byte type requires endian little or big, got {endian!r}")
        byte_order = "<" if endian == "little" else ">"

    if "data file" in fields:
        data_path = path.parent / fields["data file"]
        try:
            blob = data_path.read_bytes()
        except OSError as exc:
            raise FormatError(f"{path}: cannot read detached data file {data_path}") from exc
    elif sep >= 0:
        blob = raw[sep + 2 :]
    else:
        raise FormatError(f"{path}: header never ends (no blank line and no data file)")

    encoding = fields["encoding"]
    if encoding in ("gzip", "gz"):
        try:
            payload = gzip.decompress(blob)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: gzip payload is corrupt") from exc
    elif encoding == "raw":
        payload = blob
    else:
        raise FormatError(f"{path}: unsupported encoding {encoding!r}")

    expected = int(np.prod(sizes)) * itemsize
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} data bytes for sizes {sizes}, got {len(payload)}")

    data = np.frombuffer(payload, dtype=np.dtype(byte_order + base))
    if byte_order == ">":
        data = data.astype(np.dtype("<" + base))
    return sizes, data, fields, key_values


def _read_spacing(fields: dict[str, str], n_spatial: int, path: Path) -> tuple[float, float, float] | None:
    if "spacings" not in fields:
        return None
    try:
        values = [float(v) for v in fields["spacings"].split()]
    except ValueError as exc:
        raise FormatError(f"{path}: malformed spacings {fields['spacings']!r}") from exc
    # A component axis carries a nan spacing; only the spatial tail counts.
    return _spacing_triple(values[-n_spatial:], path)


def save_tensor_volume(
    path: str | Path,
    tensors: np.ndarray,
    spacing: tuple[float, float, float],
    dtype: str = "double",
    encoding: str = "gzip",
) -> None:
    """Writes an embedded (ni, nj, nk, 6) field as a six-component file.

    Off-diagonal coefficients are divided by sqrt(2) back to plain matrix
    entries, so the file holds (Dxx, Dxy, Dxz, Dyy, Dyz, Dzz) as other
    tensor tools expect.
    """
    path = Path(path)
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 4 or tensors.shape[-1] != 6:
        raise FormatError(f"expected an embedded (ni, nj, nk, 6) field, got shape {tensors.shape}")
    if dtype not in ("float", "double"):
        raise FormatError(f"tensor volumes are float or double, not {dtype!r}")

    file_comps = np.empty_like(tensors)
    for emb_idx, file_idx in enumerate(_EMB_TO_FILE):
        scale = 1.0 if emb_idx < 3 else 1.0 / _SQRT2
        file_comps[..., file_idx] = scale * tensors[..., emb_idx]
    ni, nj, nk = tensors.shape[:3]
    out = np.ascontiguousarray(file_comps.transpose(2, 1, 0, 3), dtype="<f4" if dtype == "float" else "<f8")
    _write(
        path,
        [6, ni, nj, nk],
        out.dtype,
        out.tobytes(),
        [math.nan, *spacing],
        ["3D-symmetric-matrix", "space", "space", "space"],
        {},
        encoding,
    )


def load_tensor_volume(
    path: str | Path,
) -> tuple[np.ndarray, np.ndarray | None, tuple[float, float, float] | None]:
    """Reads a 6- or 7-component tensor file to embedded coefficients.

    Returns (tensors (ni, nj, nk, 6) float64, confidence or None, spacing
    or None); a 7-component file contributes its leading confidence plane,
    where values <= 0.5 mark out-of-mask voxels.
    """
    path = Path(path)
    sizes, flat, fields, _ = _read(path)
    if len(sizes) != 4 or sizes[0] not in (6, 7):
        raise FormatError(f"{path}: not a tensor volume (sizes {sizes}; want 6 or 7 leading components)")
    ncomp, ni, nj, nk = sizes
    grid = flat.astype(np.float64).reshape(nk, nj, ni, ncomp).transpose(2, 1, 0, 3)
    confidence = None
    if ncomp == 7:
        confidence = np.ascontiguousarray(grid[..., 0])
        grid = grid[..., 1:]

    emb = np.empty((ni, nj, nk, 6), dtype=np.float64)
    for emb_idx, file_idx in enumerate(_EMB_TO_FILE):
        scale = 1.0 if emb_idx < 3 else _SQRT2
        emb[..., emb_idx] = scale * grid[..., file_idx]
    return emb, confidence, _read_spacing(fields, 3, path)


def _save_scalar(
    path: Path,
    volume: np.ndarray,
    spacing: tuple[float, float, float],
    key_values: dict[str, str],
    encoding: str,
) -> None:
    if volume.ndim != 3:
        raise FormatError(f"expected a scalar (ni, nj, nk) volume, got shape {volume.shape}")
    ni, nj, nk = volume.shape
    out = np.ascontiguousarray(volume.transpose(2, 1, 0), dtype=volume.dtype.newbyteorder("<"))
    _write(
        path,
        [ni, nj, nk],
        np.dtype(volume.dtype),
        out.tobytes(),
        list(spacing),
        ["space", "space", "space"],
        key_values,
        encoding,
    )


def _load_scalar(path: Path) -> tuple[np.ndarray, tuple[float, float, float] | None, dict[str, str]]:
    sizes, flat, fields, key_values = _read(path)
    if len(sizes) != 3:
        raise FormatError(f"{path}: not a scalar volume (sizes {sizes})")
    ni, nj, nk = sizes
    volume = np.ascontiguousarray(flat.reshape(nk, nj, ni).transpose(2, 1, 0))
    return volume, _read_spacing(fields, 3, path), key_values


def save_mask(
    path: str | Path,
    mask: np.ndarray,
    spacing: tuple[float, float, float],
    encoding: str = "gzip",
) -> None:
    mask = np.asarray(mask)
    if mask.dtype != np.uint8:
        if mask.dtype != bool:
            raise FormatError(f"masks are boolean or uint8, not {mask.dtype}")
        mask = mask.astype(np.uint8)
    _save_scalar(Path(path), mask, spacing, {"map-type": "mask"}, encoding)


def load_mask(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float] | None]:
    path = Path(path)
    volume, spacing, _ = _load_scalar(path)
    if volume.dtype.kind not in "ui":
        raise FormatError(f"{path}: masks are integer volumes, got type {volume.dtype}")
    return volume != 0, spacing


def save_map(
    path: str | Path,
    volume: np.ndarray,
    spacing: tuple[float, float, float],
    map_type: str,
    encoding: str = "gzip",
) -> None:
    """Writes a float64 scalar map tagged with its kind (stat, p, tfce, ...)."""
    volume = np.asarray(volume, dtype=np.float64)
    _save_scalar(Path(path), volume, spacing, {"map-type": map_type}, encoding)


def load_map(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float] | None, str | None]:
    path = Path(path)
    volume, spacing, key_values = _load_scalar(path)
    if volume.dtype.kind != "f":
        raise FormatError(f"{path}: maps are floating-point volumes, got type {volume.dtype}")
    return volume.astype(np.float64), spacing, key_values.get("map-type")


def load_scalar_volume(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float] | None]:
    """Reads any scalar volume (e.g. a background image) as float64."""
    volume, spacing, _ = _load_scalar(Path(path))
    return volume.astype(np.float64), spacing
