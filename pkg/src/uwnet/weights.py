"""Binary weight-file codec.

Layout (little-endian, no padding between records):

    magic   4 bytes  b"SUWN"
    version u32      currently 1
    count   u32      number of tensor records
    record: name_len u16, name bytes (utf-8), ndim u8, dims u32 * ndim,
            data float32 * prod(dims)

Model weights store each conv layer's 4-d weight under the layer name and its
bias as a 1-d tensor named "<layer>.bias". The same container carries feature
extractor weights (names "f0", "f0.bias", ...).
"""

import hashlib
import struct

import numpy as np

MAGIC = b"SUWN"
VERSION = 1


class WeightsFormatError(ValueError):
    """Base for malformed weight files."""


class BadMagicError(WeightsFormatError):
    pass


class UnsupportedVersionError(WeightsFormatError):
    pass


class TruncatedFileError(WeightsFormatError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class DuplicateTensorNameError(WeightsFormatError):
    pass


def write_tensors(named) -> bytes:
    """Serialize an iterable of (name, float32 array) pairs."""
    chunks = []
    seen = set()
    items = list(named)
    for name, arr in items:
        if name in seen:
            raise DuplicateTensorNameError(f"duplicate tensor name: {name!r}")
        seen.add(name)
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.tobytes())
    header = MAGIC + struct.pack("<II", VERSION, len(items))
    return header + b"".join(chunks)


def read_tensors(data: bytes) -> dict:
    """Parse a weight file into an ordered {name: float32 array} dict."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedFileError("truncated header", len(data))
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}")
    offset = 12
    out = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise TruncatedFileError("truncated record header", offset)
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + name_len + 1 > len(data):
            raise TruncatedFileError("truncated tensor name", offset)
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        ndim = data[offset]
        offset += 1
        if offset + 4 * ndim > len(data):
            raise TruncatedFileError("truncated dims", offset)
        dims = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        n_bytes = 4 * int(np.prod(dims, dtype=np.int64)) if ndim else 4
        if offset + n_bytes > len(data):
            raise TruncatedFileError(f"truncated data for {name!r}", offset)
        arr = np.frombuffer(data[offset : offset + n_bytes], dtype="<f4").reshape(dims)
        offset += n_bytes
        if name in out:
            raise DuplicateTensorNameError(f"duplicate tensor name: {name!r}")
        out[name] = arr.copy()
    if offset != len(data):
        raise TruncatedFileError("trailing bytes after last record", offset)
    return out


def element_census(data: bytes) -> int:
    """Total number of stored values across all records, straight off the file."""
    return sum(int(a.size) for a in read_tensors(data).values())


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
