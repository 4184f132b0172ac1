"""Named-tensor container: the toolkit's on-disk format for weights and checkpoints.

Layout, little-endian throughout:

    magic "NTL1" | u32 entry count
    per entry: u32 name length | name bytes (UTF-8) | u8 rank | rank x u32 extents
               | raw float32 data
    trailer: u32 CRC32 over every preceding byte

Checkpoints reuse the format with optimizer-state entries prefixed
"adam.m." / "adam.v." plus a one-element "adam.t" step counter.
"""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, MappingError
from .tensor import Tensor

MAGIC = b"NTL1"
_BRANCH_SUFFIX = re.compile(r"_br\d+$")

Entry = tuple[str, np.ndarray]


def _entry_array(name: str, data) -> np.ndarray:
    arr = data.data if isinstance(data, Tensor) else np.asarray(data)
    if arr.dtype != np.float32:
        raise InputError(f"entry '{name}' must be float32, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def write(path: str | Path, entries: list[Entry]) -> None:
    """Serialize entries in order; byte-for-byte reproducible."""
    seen = set()
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", len(entries))
    for name, data in entries:
        if name in seen:
            raise InputError(f"duplicate entry name '{name}'")
        seen.add(name)
        arr = _entry_array(name, data)
        raw_name = name.encode("utf-8")
        buf += struct.pack("<I", len(raw_name))
        buf += raw_name
        if arr.ndim > 255:
            raise InputError(f"entry '{name}' rank {arr.ndim} exceeds format limit")
        buf += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            buf += struct.pack("<I", extent)
        buf += arr.astype("<f4", copy=False).tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(f"truncated while reading {what} at offset {self.off}")
        piece = self.blob[self.off : self.off + n]
        self.off += n
        return piece

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def read(path: str | Path) -> list[Entry]:
    """Parse a container; any structural defect raises FormatError with the offset."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise FormatError("truncated while reading magic at offset 0")
    payload, trailer = blob[:-4], blob[-4:]
    r = _Reader(payload)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0")
    count = r.u32("entry count")
    entries: list[Entry] = []
    seen = set()
    for _ in range(count):
        name_len = r.u32("name length")
        name_off = r.off
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as err:
            raise FormatError(f"invalid UTF-8 name at offset {name_off}") from err
        if name in seen:
            raise FormatError(f"duplicate entry name '{name}' at offset {name_off}")
        seen.add(name)
        rank = r.u8("rank")
        shape = tuple(r.u32(f"extent of '{name}'") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = r.take(size * 4, f"data of '{name}'")
        entries.append((name, np.frombuffer(raw, dtype="<f4").reshape(shape).copy()))
    if r.off != len(payload):
        raise FormatError(f"{len(payload) - r.off} unexpected trailing bytes at offset {r.off}")
    stored = struct.unpack("<I", trailer)[0]
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if stored != actual:
        raise FormatError(
            f"checksum mismatch at offset {len(payload)}: stored {stored:#010x}, "
            f"computed {actual:#010x}"
        )
    return entries


@dataclass
class LoadReport:
    loaded: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)


def _lenient_key(param_name: str) -> str:
    """Map 'block5_conv1_br2.weights' onto its unsuffixed source name."""
    layer, _, part = param_name.rpartition(".")
    return f"{_BRANCH_SUFFIX.sub('', layer)}.{part}"


def load_into(graph, source, strict: bool = False) -> LoadReport:
    """Copy matching entries into graph parameters; atomic on failure.

    Strict mode requires every graph parameter to be matched by exact name.
    Lenient mode also fills branch copies ("_br{b}") from the bare layer name,
    which is how a single pretrained block-5 stack seeds both branches.
    """
    entries = read(source) if isinstance(source, (str, Path)) else list(source)
    by_name = {}
    for name, arr in entries:
        if name in by_name:
            raise FormatError(f"duplicate entry name '{name}'")
        by_name[name] = _entry_array(name, arr)

    plan: list[tuple[str, np.ndarray]] = []
    report = LoadReport()
    used = set()
    for pname, tensor in graph.params.items():
        src = None
        if pname in by_name:
            src = pname
        elif not strict and _lenient_key(pname) in by_name:
            src = _lenient_key(pname)
        if src is None:
            report.missing.append(pname)
            continue
        arr = by_name[src]
        if arr.shape != tensor.shape:
            raise MappingError(
                f"shape mismatch for '{pname}': file has {arr.shape}, graph has {tensor.shape}"
            )
        plan.append((pname, arr))
        report.loaded.append(pname)
        used.add(src)
    report.extra = [n for n, _ in entries if n not in used]
    if strict and report.missing:
        raise MappingError(f"missing parameters in source: {report.missing}")
    # All checks passed; now mutate.
    for pname, arr in plan:
        graph.params[pname].data[...] = arr
    return report


def graph_entries(graph) -> list[Entry]:
    """Parameters as container entries, in layer order."""
    return [(name, tensor.data) for name, tensor in graph.params.items()]


def save_checkpoint(path: str | Path, graph, adam_state=None) -> None:
    entries = graph_entries(graph)
    if adam_state is not None:
        for pname in adam_state.moments:
            m, v = adam_state.moments[pname]
            entries.append((f"adam.m.{pname}", m))
            entries.append((f"adam.v.{pname}", v))
        entries.append(("adam.t", np.array([adam_state.t], dtype=np.float32)))
    write(path, entries)


def load_checkpoint(path: str | Path, graph) -> LoadReport:
    """Restore parameters from a checkpoint, ignoring optimizer entries."""
    entries = [(n, a) for n, a in read(path) if not n.startswith("adam.")]
    return load_into(graph, entries, strict=True)
