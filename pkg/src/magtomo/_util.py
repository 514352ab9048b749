import contextlib
import json
import struct

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError


def derive_seed(seed, *keys):
    """Stable 32-bit child seed for ``(seed, *keys)``."""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def deterministic_mode(enabled=True):
    """Pin BLAS to one thread so reductions happen in a fixed order."""
    if not enabled:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


class BinaryWriter:
    """Little-endian container writer shared by the on-disk formats."""

    def __init__(self, fh):
        self.fh = fh

    def magic(self, tag, version=1):
        self.fh.write(tag.encode("ascii"))
        self.u32(version)

    def u8(self, v):
        self.fh.write(struct.pack("<B", v))

    def u32(self, v):
        self.fh.write(struct.pack("<I", v))

    def u64(self, v):
        self.fh.write(struct.pack("<Q", v))

    def f64(self, v):
        self.fh.write(struct.pack("<d", v))

    def array(self, arr, dtype):
        self.fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())

    def json(self, obj):
        blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
        self.u64(len(blob))
        self.fh.write(blob)


class BinaryReader:
    def __init__(self, fh, path="<stream>"):
        self.fh = fh
        self.path = path

    def _read(self, n):
        buf = self.fh.read(n)
        if len(buf) != n:
            raise ConfigError(f"{self.path}: truncated file")
        return buf

    def magic(self, tag, version=1):
        got = self._read(4)
        if got != tag.encode("ascii"):
            raise ConfigError(f"{self.path}: bad magic {got!r}, expected {tag!r}")
        v = self.u32()
        if v != version:
            raise ConfigError(f"{self.path}: unsupported {tag} version {v}")

    def u8(self):
        return struct.unpack("<B", self._read(1))[0]

    def u32(self):
        return struct.unpack("<I", self._read(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._read(8))[0]

    def f64(self):
        return struct.unpack("<d", self._read(8))[0]

    def array(self, dtype, shape):
        dt = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape, dtype=np.int64))
        buf = self._read(count * dt.itemsize)
        return np.frombuffer(buf, dtype=dt).astype(np.dtype(dtype), copy=True).reshape(shape)

    def json(self):
        n = self.u64()
        return json.loads(self._read(n).decode("utf-8"))
