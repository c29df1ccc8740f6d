"""Flat binary container for named fp32 tensors.

Layout: magic "AEND", version u32, tensor count u32, then per tensor:
name length u32, UTF-8 name bytes, rank u32, dims as u64, values as fp32.
All integers and floats little-endian. Used for model checkpoints and for
feature matrices written to disk.
"""

import struct

import numpy as np

MAGIC = b"AEND"
VERSION = 1


class FormatError(ValueError):
    """Raised when a tensor file is corrupt or not a tensor file."""


def write_tensors(path, tensors):
    """Write an ordered mapping of name -> array as fp32.

    Insertion order of `tensors` is the on-disk order, so writing the
    same mapping twice produces byte-identical files.
    """
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack("<%dQ" % data.ndim, *data.shape))
            f.write(data.tobytes())


def _read_exact(f, n, path, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("%s: truncated while reading %s" % (path, what))
    return buf


def read_tensors(path):
    """Read a tensor file back into a dict of name -> fp32 array.

    Dict preserves on-disk order. Raises FormatError on bad magic,
    unknown version, or truncation.
    """
    out = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path, "magic")
        if magic != MAGIC:
            raise FormatError("%s: bad magic %r" % (path, magic))
        version, count = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != VERSION:
            raise FormatError("%s: unsupported version %d" % (path, version))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, path, "name length"))
            name = _read_exact(f, name_len, path, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, path, "rank"))
            dims = struct.unpack(
                "<%dQ" % rank, _read_exact(f, 8 * rank, path, "dims")
            )
            size = 1
            for d in dims:
                size *= d
            raw = _read_exact(f, 4 * size, path, "values of %s" % name)
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return out
