"""Binary named-tensor container for model weights.

Layout (all integers little-endian)::

    b"HMSS"  u16 version
    u32 config_len, config_len bytes of UTF-8 ``key=value`` lines
    u32 tensor_count
    per tensor: u16 name_len, name bytes, u8 dtype, u8 rank, rank * u32 dims, raw data

dtype 0 is float32, 1 is float64, both little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CorruptFileError, UnsupportedVersionError
from .model import HummussConfig, ModelWeights

MAGIC = b"HMSS"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1}


def write_container(config_text: str, tensors: dict[str, np.ndarray], dtype: str = "f64") -> bytes:
    code = _CODES[dtype]
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    cfg = config_text.encode("utf-8")
    out += struct.pack("<I", len(cfg)) + cfg
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        raw_name = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFileError(f"file truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(data: bytes) -> tuple[str, dict[str, np.ndarray]]:
    """Parse container bytes into ``(config_text, tensors)``; arrays keep their stored dtype."""
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a HMSS weights file")
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported weights format version {version}")
    (cfg_len,) = r.unpack("<I")
    try:
        config_text = r.take(cfg_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError("config record is not UTF-8") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8", errors="replace")
        code, rank = r.unpack("<BB")
        if code not in DTYPES:
            raise CorruptFileError(f"{name}: unknown dtype code {code}")
        dims = r.unpack(f"<{rank}I")
        dtype = DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(dims)
    if r.pos != len(data):
        raise CorruptFileError(f"{len(data) - r.pos} trailing bytes after tensor table")
    return config_text, tensors


def dumps(weights: ModelWeights, dtype: str = "f64") -> bytes:
    return write_container(weights.config.to_text(), weights.named_tensors(), dtype)


def loads(data: bytes) -> ModelWeights:
    config_text, tensors = read_container(data)
    return ModelWeights.from_named_tensors(HummussConfig.from_text(config_text), tensors)


def save_weights(weights: ModelWeights, path, dtype: str = "f64") -> None:
    Path(path).write_bytes(dumps(weights, dtype))


def load_weights(path) -> ModelWeights:
    return loads(Path(path).read_bytes())
