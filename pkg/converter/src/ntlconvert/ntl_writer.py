"""Writer for the NTL1 named-tensor container (the consumer's wire format).

Layout, little-endian: magic "NTL1", u32 entry count, then per entry a u32
name length, the UTF-8 name, a u8 rank, rank x u32 extents, and the raw
float32 data; the file ends with a u32 CRC32 over everything before it.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"NTL1"


def write_ntl(path: str | Path, entries: list[tuple[str, np.ndarray]]) -> int:
    """Serialize entries in order; returns the byte count written."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", len(entries))
    seen = set()
    for name, arr in entries:
        if name in seen:
            raise ValueError(f"duplicate entry name '{name}'")
        seen.add(name)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw))
        buf += raw
        buf += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            buf += struct.pack("<I", extent)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(buf))
    return len(buf)
