"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"MOCL"  u32 version
    u32 meta length, canonical JSON meta (config, epoch, rng, vocab, log)
    u32 tensor count
    per tensor: u16 name length, name, u8 dtype (0=f32, 1=f64), u8 rank,
                u32 dims..., raw values
    u32 CRC-32 of everything above
"""

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"MOCL"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1}


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict = field(default_factory=dict)
    version: int = VERSION
    dtype: str = "f64"

    @property
    def config(self):
        return self.meta.get("config", {})

    @property
    def epoch(self):
        return self.meta.get("epoch", 0)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def to_bytes(ckpt, dtype=None):
    code = _CODES[dtype or ckpt.dtype]
    out = bytearray(MAGIC)
    out += struct.pack("<I", ckpt.version)
    meta = canonical_json(ckpt.meta)
    out += struct.pack("<I", len(meta)) + meta
    out += struct.pack("<I", len(ckpt.tensors))
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        raw_name = name.encode("utf-8")
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CorruptionError(f"truncated checkpoint while reading {what}", self.pos)
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf):
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    r.pos = 4
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (meta_len,) = r.unpack("<I", "meta length")
    try:
        meta = json.loads(r.take(meta_len, "meta").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"unreadable meta block: {e}", 12) from None
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    stored = "f64"
    for _ in range(count):
        (nlen,) = r.unpack("<H", "tensor name length")
        name = r.take(nlen, "tensor name").decode("utf-8", errors="replace")
        code, rank = r.unpack("<BB", f"header of {name}")
        if code not in _DTYPES:
            raise CorruptionError(f"unknown dtype code {code} for {name}", r.pos - 2)
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        dt = _DTYPES[code]
        stored = "f32" if code == 0 else "f64"
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = r.take(n * dt.itemsize, f"values of {name}")
        tensors[name] = np.frombuffer(raw, dtype=dt).reshape(dims).astype(np.float64)
    body_end = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if crc != zlib.crc32(bytes(buf[:body_end])):
        raise CorruptionError("CRC-32 mismatch", body_end)
    if r.pos != len(buf):
        raise CorruptionError("trailing bytes after checksum", r.pos)
    return Checkpoint(meta, tensors, version, stored)


def save_checkpoint(ckpt, path, dtype=None):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt, dtype))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
