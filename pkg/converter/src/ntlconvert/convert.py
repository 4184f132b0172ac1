from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np

from .ntl_writer import write_ntl

# Conv layers per block and filter counts, fixed by the two families.
CONV_COUNTS = {"vgg16": (2, 2, 3, 3, 3), "vgg19": (2, 2, 4, 4, 4)}
BLOCK_FILTERS = (64, 128, 256, 512, 512)
IN_CHANNELS = 3


class ConversionError(Exception):
    """Source file does not hold the expected layer inventory."""


@dataclass
class ConvertSummary:
    entries_written: int
    total_bytes: int
    out_path: str


def name_map(family: str) -> list[tuple[str, str, str, tuple[int, ...]]]:
    """(hdf5 kernel path, hdf5 bias path, canonical layer name, kernel shape).

    Kernel shapes are in the source's (kh, kw, in, out) order. The HDF5 tree
    nests each layer's datasets under a group of the same name, the layout the
    common pretrained VGG distributions use.
    """
    if family not in CONV_COUNTS:
        raise ConversionError(f"unknown family '{family}' (expected vgg16 or vgg19)")
    rows = []
    in_c = IN_CHANNELS
    for block, n_conv in enumerate(CONV_COUNTS[family], start=1):
        out_c = BLOCK_FILTERS[block - 1]
        for ci in range(1, n_conv + 1):
            layer = f"block{block}_conv{ci}"
            rows.append(
                (
                    f"{layer}/{layer}/kernel:0",
                    f"{layer}/{layer}/bias:0",
                    layer,
                    (3, 3, in_c if ci == 1 else out_c, out_c),
                )
            )
            in_c = out_c
    return rows


def convert(source_path: str | Path, family: str, out_path: str | Path) -> ConvertSummary:
    """Extract every conv layer, transpose kernels, and write one NTL1 file.

    The inventory check is exact: a missing dataset or an unexpected kernel
    shape aborts the conversion before anything is written.
    """
    plan = name_map(family)
    entries: list[tuple[str, np.ndarray]] = []
    with h5py.File(source_path, "r") as src:
        missing = [p for k, b, _, _ in plan for p in (k, b) if p not in src]
        if missing:
            raise ConversionError(f"source lacks expected datasets: {missing}")
        for kernel_path, bias_path, layer, want_shape in plan:
            kernel = np.asarray(src[kernel_path], dtype=np.float32)
            bias = np.asarray(src[bias_path], dtype=np.float32)
            if kernel.shape != want_shape:
                raise ConversionError(
                    f"{kernel_path}: shape {kernel.shape}, expected {want_shape}"
                )
            if bias.shape != (want_shape[3],):
                raise ConversionError(
                    f"{bias_path}: shape {bias.shape}, expected ({want_shape[3]},)"
                )
            # (kh, kw, in, out) -> (out, in, kh, kw)
            entries.append((f"{layer}.weights", np.transpose(kernel, (3, 2, 0, 1))))
            entries.append((f"{layer}.bias", bias))
    total = write_ntl(out_path, entries)
    return ConvertSummary(entries_written=len(entries), total_bytes=total, out_path=str(out_path))
