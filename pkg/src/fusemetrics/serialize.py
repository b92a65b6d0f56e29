"""Flat float32 parameter container.

Layout: a 16-byte header — 4-byte ASCII magic, uint32 version, uint32
tensor count, uint32 reserved (zero), all little-endian — followed by
every tensor's float32 values flattened in C order and concatenated in
the architecture's canonical order.  Shapes are not stored; the loader
supplies them, so the file stays a plain float dump.
"""

import struct

import numpy as np

from .errors import FormatError, MissingArtifactError

__all__ = ["write_params", "read_params", "read_header"]

_HEADER = struct.Struct("<4sIII")
VERSION = 1


def write_params(path, magic, arrays):
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 ASCII bytes")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic.encode("ascii"), VERSION, len(arrays), 0))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_header(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"parameter file not found: {path}") from exc
    if len(raw) != _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, count, _ = _HEADER.unpack(raw)
    return magic.decode("ascii", "replace"), version, count


def read_params(path, magic, shapes):
    """Read tensors back given their expected shapes (canonical order)."""
    got_magic, version, count = read_header(path)
    if got_magic != magic:
        raise FormatError(
            f"{path}: magic {got_magic!r} does not match expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if count != len(shapes):
        raise FormatError(
            f"{path}: file holds {count} tensors, architecture expects "
            f"{len(shapes)}")
    out = []
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for shape in shapes:
            n = int(np.prod(shape))
            buf = fh.read(n * 4)
            if len(buf) != n * 4:
                raise FormatError(f"{path}: truncated tensor data")
            out.append(np.frombuffer(buf, dtype="<f4").reshape(shape).copy())
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after last tensor")
    return out
