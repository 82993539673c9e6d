"""Reader/writer for a small NRRD subset.

Supported: magic NRRD0004 (NRRD0001-0005 accepted on read), 3D, ``type``
short or uchar, ``encoding: raw``, ``endian: little``, spacing given either
as ``spacings`` or as diagonal ``space directions``. Anything else raises
:class:`UnsupportedNRRDError` naming the offending field.
"""

from __future__ import annotations

import re

import numpy as np

from .volume import HounsfieldVolume, LabelVolume


class NRRDError(ValueError):
    pass


class UnsupportedNRRDError(NRRDError):
    def __init__(self, field: str, value: str):
        super().__init__(f"unsupported NRRD feature: {field}: {value}")
        self.field = field


_TYPES = {
    "short": "<i2", "short int": "<i2", "signed short": "<i2", "signed short int": "<i2",
    "int16": "<i2", "int16_t": "<i2",
    "uchar": "u1", "unsigned char": "u1", "uint8": "u1", "uint8_t": "u1",
}
# fields that carry no information we need and are safe to skip
_IGNORED = {"content", "kinds", "space origin", "space units", "labels", "units", "space", "measurement frame"}


def _parse_vector(text: str) -> list[float]:
    return [float(v) for v in text.strip().strip("()").split(",")]


def _spacing_from_directions(value: str) -> tuple[float, float, float]:
    vecs = re.findall(r"\(([^)]*)\)", value)
    if len(vecs) != 3:
        raise UnsupportedNRRDError("space directions", value)
    mat = np.array([_parse_vector(v) for v in vecs])
    if mat.shape != (3, 3) or np.count_nonzero(mat - np.diag(np.diag(mat))):
        raise UnsupportedNRRDError("space directions", value)
    return tuple(float(abs(d)) for d in np.diag(mat))


def read_nrrd_array(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a 3D short/uchar NRRD as ``(array, spacing_mm)`` without volume validation."""
    with open(path, "rb") as fh:
        buf = fh.read()
    end = buf.find(b"\n\n")
    if end < 0:
        raise NRRDError(f"{path}: header is not terminated by a blank line")
    lines = buf[:end].decode("ascii").split("\n")
    payload = buf[end + 2:]
    if not re.fullmatch(r"NRRD000[1-5]", lines[0].strip()):
        raise NRRDError(f"{path}: bad magic {lines[0]!r}")

    fields: dict[str, str] = {}
    for line in lines[1:]:
        if not line or line.startswith("#") or ":=" in line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise NRRDError(f"{path}: malformed header line {line!r}")
        fields[key.strip().lower()] = value.strip()

    for key, value in fields.items():
        if key not in _IGNORED and key not in {"type", "dimension", "sizes", "spacings", "space directions",
                                               "endian", "encoding"}:
            raise UnsupportedNRRDError(key, value)
    for key in ("type", "dimension", "sizes", "encoding"):
        if key not in fields:
            raise NRRDError(f"{path}: missing required field '{key}'")

    ntype = fields["type"].lower()
    if ntype not in _TYPES:
        raise UnsupportedNRRDError("type", fields["type"])
    if fields["dimension"] != "3":
        raise UnsupportedNRRDError("dimension", fields["dimension"])
    if fields["encoding"].lower() != "raw":
        raise UnsupportedNRRDError("encoding", fields["encoding"])
    dtype = np.dtype(_TYPES[ntype])
    if dtype.itemsize > 1 and fields.get("endian", "").lower() != "little":
        raise UnsupportedNRRDError("endian", fields.get("endian", "<missing>"))

    sizes = tuple(int(v) for v in fields["sizes"].split())
    if len(sizes) != 3 or min(sizes) < 1:
        raise NRRDError(f"{path}: bad sizes {fields['sizes']!r}")
    if "spacings" in fields:
        spacing = tuple(float(v) for v in fields["spacings"].split())
    elif "space directions" in fields:
        spacing = _spacing_from_directions(fields["space directions"])
    else:
        spacing = (1.0, 1.0, 1.0)

    expected = int(np.prod(sizes)) * dtype.itemsize
    if len(payload) != expected:
        raise NRRDError(f"{path}: payload has {len(payload)} bytes, sizes {sizes} need {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(sizes, order="F").copy(), spacing


def read_nrrd(path) -> HounsfieldVolume | LabelVolume:
    """uchar files are read as label volumes, short files as HU volumes."""
    arr, spacing = read_nrrd_array(path)
    if arr.dtype.itemsize == 1:
        return LabelVolume(arr, spacing)
    return HounsfieldVolume(arr.astype(np.int16), spacing)


def write_nrrd(volume: HounsfieldVolume | LabelVolume, path) -> None:
    if isinstance(volume, HounsfieldVolume):
        write_nrrd_array(volume.hu, volume.spacing_mm, path)
    elif isinstance(volume, LabelVolume):
        write_nrrd_array(volume.labels, volume.spacing_mm, path)
    else:
        raise TypeError(f"cannot write {type(volume).__name__}")


def write_nrrd_array(arr: np.ndarray, spacing_mm, path) -> None:
    """Write a 3D int16 ("short") or uint8 ("uchar") array without volume validation."""
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {arr.shape}")
    if arr.dtype == np.int16:
        arr, ntype = arr.astype("<i2"), "short"
    elif arr.dtype == np.uint8:
        ntype = "uchar"
    else:
        raise TypeError(f"unsupported dtype {arr.dtype}; use int16 or uint8")
    header = "\n".join([
        "NRRD0004",
        f"type: {ntype}",
        "dimension: 3",
        "sizes: " + " ".join(str(n) for n in arr.shape),
        "spacings: " + " ".join(repr(float(s)) for s in spacing_mm),
        "endian: little",
        "encoding: raw",
    ]) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(arr.tobytes(order="F"))
