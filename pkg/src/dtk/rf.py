"""Receptive-field coverage analysis for stacks of dilated convolutions.

Influence is structural: an input pixel counts if any chain of kernel taps
connects it to the single output position. Two routes compute the same mask:
index-set propagation (fast, exact) and a one-hot probe that runs the real
convolution ops with all-ones kernels, so no cancellation can hide a tap.
Equal-rate stacks leave checkerboard holes inside the nominal span; mixing
rates (e.g. 1, 2, 3) restores full coverage over the same span.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .errors import InputError
from .tensor import Tensor
from .vgg import ArchConfig, CONV_COUNTS


@dataclass(frozen=True)
class ScheduleLayer:
    kernel: int
    dilation: int = 1
    stride: int = 1

    def __post_init__(self):
        if min(self.kernel, self.dilation, self.stride) < 1:
            raise InputError(f"schedule entries must be positive: {self}")

    @property
    def effective_kernel(self) -> int:
        return self.kernel + (self.kernel - 1) * (self.dilation - 1)


def _coerce(schedule) -> list[ScheduleLayer]:
    out = []
    for entry in schedule:
        if isinstance(entry, ScheduleLayer):
            out.append(entry)
        else:
            out.append(ScheduleLayer(*entry))
    if not out:
        raise InputError("schedule must have at least one layer")
    return out


@dataclass
class CoverageMask:
    mask: np.ndarray  # bool [H,W] over input positions that reach the output
    span: tuple[int, int]  # bounding-box extents of the covered region
    density: float  # covered fraction within the bounding box

    @property
    def gridding(self) -> bool:
        return self.density < 1.0


def _mask_stats(mask: np.ndarray) -> CoverageMask:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    box = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    span = (box.shape[0], box.shape[1])
    return CoverageMask(mask=mask, span=span, density=float(box.mean()))


def input_extent(schedule) -> int:
    """Input size per axis so that the valid (unpadded) stack emits 1 position."""
    e = 1
    for layer in reversed(_coerce(schedule)):
        e = (e - 1) * layer.stride + layer.effective_kernel
    return e


def coverage(schedule) -> CoverageMask:
    """Dependency mask of the single output position, by index propagation."""
    layers = _coerce(schedule)
    mask = np.ones((1, 1), dtype=bool)
    for layer in reversed(layers):
        h_out, w_out = mask.shape
        h_in = (h_out - 1) * layer.stride + layer.effective_kernel
        w_in = (w_out - 1) * layer.stride + layer.effective_kernel
        grown = np.zeros((h_in, w_in), dtype=bool)
        s, r = layer.stride, layer.dilation
        for a in range(layer.kernel):
            for b in range(layer.kernel):
                grown[
                    a * r : a * r + (h_out - 1) * s + 1 : s,
                    b * r : b * r + (w_out - 1) * s + 1 : s,
                ] |= mask
        mask = grown
    return _mask_stats(mask)


def coverage_probe(schedule) -> CoverageMask:
    """Same mask by brute force: one-hot inputs through the real conv ops.

    All-ones kernels keep every contribution positive, so output > 0 exactly
    when the probed pixel has a structural path to the output.
    """
    layers = _coerce(schedule)
    e = input_extent(layers)
    batch = np.eye(e * e, dtype=np.float32).reshape(e * e, 1, e, e)
    x = Tensor(batch)
    for layer in layers:
        spec = ops.ConvSpec(
            in_channels=1,
            out_channels=1,
            kernel=(layer.kernel, layer.kernel),
            dilation=(layer.dilation, layer.dilation),
            stride=(layer.stride, layer.stride),
        )
        w = Tensor(np.ones((1, 1, layer.kernel, layer.kernel), dtype=np.float32))
        b = Tensor(np.zeros(1, dtype=np.float32))
        x = ops.conv2d_forward(x, w, b, spec)
    if x.shape[2] != 1 or x.shape[3] != 1:
        raise InputError(f"probe expected a single output position, got {x.shape}")
    mask = (x.data.reshape(e, e) > 0)
    return _mask_stats(mask)


def union_coverage(masks: list[CoverageMask]) -> CoverageMask:
    """Center-aligned OR of coverage masks (used where branches merge)."""
    he = max(m.mask.shape[0] for m in masks)
    we = max(m.mask.shape[1] for m in masks)
    acc = np.zeros((he, we), dtype=bool)
    for m in masks:
        dh = (he - m.mask.shape[0]) // 2
        dw = (we - m.mask.shape[1]) // 2
        acc[dh : dh + m.mask.shape[0], dw : dw + m.mask.shape[1]] |= m.mask
    return _mask_stats(acc)


def span_formula(schedule) -> int:
    """Closed form for the bounding-box extent: 1 + sum (k-1) * r * prod(earlier strides)."""
    layers = _coerce(schedule)
    span = 1
    stride_prod = 1
    for layer in layers:
        span += (layer.kernel - 1) * layer.dilation * stride_prod
        stride_prod *= layer.stride
    return span


@dataclass
class RfRow:
    layer: str
    span: tuple[int, int]
    density: float
    mask: np.ndarray = None


def rf_report(config: ArchConfig) -> list[RfRow]:
    """Cumulative coverage at every conv and pool of the built network.

    Branch layers carry their own schedules; the mask where the two branches
    merge is their center-aligned union. Pools enter the schedule as stride-2
    windows with dilation 1. Only block 5 may branch, and it is the last
    block, so the trunk never resumes after a branch.
    """
    conv_counts = CONV_COUNTS[config.family]
    pool = ScheduleLayer(2, 1, 2)
    rows: list[RfRow] = []
    trunk: list[ScheduleLayer] = []
    for bi, plan in enumerate(config.blocks, start=1):
        if len(plan.dilations) == 1:
            for ci in range(1, conv_counts[bi - 1] + 1):
                trunk.append(ScheduleLayer(3, plan.dilations[0]))
                rows.append(_row(f"block{bi}_conv{ci}", coverage(trunk)))
            trunk.append(pool)
            rows.append(_row(f"block{bi}_pool", coverage(trunk)))
        else:
            tips, pooled = [], []
            for br, rate in enumerate(plan.dilations, start=1):
                branch = list(trunk)
                for ci in range(1, conv_counts[bi - 1] + 1):
                    branch.append(ScheduleLayer(3, rate))
                    rows.append(_row(f"block{bi}_conv{ci}_br{br}", coverage(branch)))
                tips.append(coverage(branch))
                pooled.append(coverage(branch + [pool]))
            rows.append(_row(f"block{bi}_concat", union_coverage(tips)))
            rows.append(_row(f"block{bi}_pool", union_coverage(pooled)))
    return rows


def _row(name: str, cov: CoverageMask) -> RfRow:
    return RfRow(layer=name, span=cov.span, density=cov.density, mask=cov.mask)


def render_text(mask: np.ndarray) -> str:
    return "\n".join("".join("#" if v else "." for v in row) for row in mask)


def write_pgm(path: str | Path, mask: np.ndarray) -> None:
    """Plain-text PGM: covered pixels white (255), holes black."""
    h, w = mask.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in mask:
        lines.append(" ".join("255" if v else "0" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
