"""Little-endian binary helpers shared by the dataset/checkpoint/bundle formats."""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FileFormatError, TruncatedFileError, UnsupportedVersionError


def read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"expected {n} more bytes, found {len(buf)}")
    return buf


def write_struct(f, fmt: str, *values) -> None:
    f.write(struct.pack("<" + fmt, *values))


def read_struct(f, fmt: str) -> tuple:
    size = struct.calcsize("<" + fmt)
    return struct.unpack("<" + fmt, read_exact(f, size))


def write_magic(f, magic: bytes, version: int) -> None:
    f.write(magic)
    write_struct(f, "H", version)


def check_magic(f, magic: bytes, current_version: int) -> int:
    got = f.read(len(magic))
    if len(got) < len(magic):
        raise TruncatedFileError("file shorter than the magic prefix")
    if got != magic:
        raise FileFormatError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = read_struct(f, "H")
    if version == 0 or version > current_version:
        raise UnsupportedVersionError(
            f"format version {version} not supported (this build reads <= {current_version})"
        )
    return version


def write_json_block(f, obj) -> None:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    write_struct(f, "I", len(payload))
    f.write(payload)


def read_json_block(f):
    (n,) = read_struct(f, "I")
    payload = read_exact(f, n)
    try:
        return json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"malformed JSON header block: {exc}") from None


def write_array(f, arr, dtype: str) -> None:
    f.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes())


def read_array(f, dtype: str, shape) -> np.ndarray:
    dt = np.dtype(dtype)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    buf = read_exact(f, dt.itemsize * count)
    return np.frombuffer(buf, dtype=dt).reshape(shape).copy()
