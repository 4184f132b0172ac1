"""Forward and analytic backward passes for every layer kind the toolkit uses.

All functions are pure: they read their inputs and return fresh tensors.
Convolution semantics: the kernel taps an input window at positions spaced by
the dilation rate, so rate (1, 1) is exactly standard convolution, and a rate-r
kernel is interchangeable with a standard kernel that has r-1 zeros inserted
between consecutive weights along each spatial axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    dilation: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)  # top, bottom, left, right

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError(f"channel counts must be positive: {self}")
        if min(self.kernel) < 1 or min(self.dilation) < 1 or min(self.stride) < 1:
            raise ShapeError(f"kernel, dilation, stride must be positive: {self}")
        if min(self.padding) < 0:
            raise ShapeError(f"padding must be nonnegative: {self}")

    @property
    def effective_kernel(self) -> tuple[int, int]:
        """Span covered by the dilated taps: k + (k-1)(r-1) per axis."""
        kh, kw = self.kernel
        rh, rw = self.dilation
        return kh + (kh - 1) * (rh - 1), kw + (kw - 1) * (rw - 1)

    def out_extents(self, h: int, w: int) -> tuple[int, int]:
        eff_h, eff_w = self.effective_kernel
        top, bottom, left, right = self.padding
        num_h = h + top + bottom - eff_h
        num_w = w + left + right - eff_w
        if num_h < 0 or num_w < 0:
            raise ShapeError(
                f"zero-size conv output: input {h}x{w}, effective kernel {eff_h}x{eff_w}, "
                f"padding {self.padding}"
            )
        return num_h // self.stride[0] + 1, num_w // self.stride[1] + 1


def same_padding(kernel: tuple[int, int], dilation: tuple[int, int]) -> tuple[int, int, int, int]:
    """Zero padding that preserves spatial extents at stride 1.

    Total pad per axis is effective_kernel - 1, split floor on the leading side
    and ceil on the trailing side.
    """
    kh, kw = kernel
    rh, rw = dilation
    total_h = kh + (kh - 1) * (rh - 1) - 1
    total_w = kw + (kw - 1) * (rw - 1) - 1
    return total_h // 2, total_h - total_h // 2, total_w // 2, total_w - total_w // 2


@dataclass(frozen=True)
class PoolSpec:
    extent: int
    stride: int

    def __post_init__(self):
        if self.extent < 1 or self.stride < 1:
            raise ShapeError(f"pool extent and stride must be positive: {self}")

    def out_extent(self, m: int) -> int:
        if m < self.extent:
            raise ShapeError(f"pool window {self.extent} exceeds input extent {m}")
        if (m - self.extent) % self.stride != 0:
            raise ShapeError(
                f"pool does not tile input: extent {m}, window {self.extent}, "
                f"stride {self.stride} leaves a remainder"
            )
        return (m - self.extent) // self.stride + 1


@dataclass(frozen=True)
class DenseSpec:
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"dense dims must be positive: {self}")


def _pad_input(x: np.ndarray, padding: tuple[int, int, int, int]) -> np.ndarray:
    top, bottom, left, right = padding
    if top == bottom == left == right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))


def _check_conv_operands(x: Tensor, weights: Tensor, bias: Tensor, spec: ConvSpec) -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"conv input must be [N,C,H,W], got {x.shape}")
    expected_w = (spec.out_channels, spec.in_channels) + spec.kernel
    if weights.shape != expected_w:
        raise ShapeError(f"conv weights {weights.shape} do not match spec {expected_w}")
    if bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv bias {bias.shape} must be ({spec.out_channels},)")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv input has {x.shape[1]} channels, spec wants {spec.in_channels}")


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """Dilated 2-D convolution with bias over an [N,C,H,W] batch."""
    _check_conv_operands(x, weights, bias, spec)
    if not np.isfinite(x.data).all() or not np.isfinite(weights.data).all():
        raise NumericError("non-finite conv input or weights")
    h_out, w_out = spec.out_extents(x.shape[2], x.shape[3])
    x_pad = np.ascontiguousarray(_pad_input(x.data, spec.padding))
    out = np.empty((x.shape[0], spec.out_channels, h_out, w_out), dtype=x.dtype)
    kernels.conv2d_forward_kernel(
        x_pad,
        weights.data,
        bias.data,
        spec.stride[0],
        spec.stride[1],
        spec.dilation[0],
        spec.dilation[1],
        out,
    )
    return Tensor(out)


def conv2d_backward(
    grad_out: Tensor,
    x: Tensor,
    weights: Tensor,
    spec: ConvSpec,
    with_param_grads: bool = True,
):
    """Exact adjoints of conv2d_forward.

    Returns (grad_input, grad_weights, grad_bias); the parameter gradients are
    None when with_param_grads is False (frozen layers still need grad_input).
    """
    _check_conv_operands(x, weights, Tensor(np.zeros(spec.out_channels, x.data.dtype)), spec)
    h_out, w_out = spec.out_extents(x.shape[2], x.shape[3])
    expected = (x.shape[0], spec.out_channels, h_out, w_out)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match output {expected}")

    top, bottom, left, right = spec.padding
    x_pad = np.ascontiguousarray(_pad_input(x.data, spec.padding))
    go = np.ascontiguousarray(grad_out.data)

    gx_pad = np.zeros(x_pad.shape, dtype=np.float64)
    kernels.conv2d_backward_input_kernel(
        go, weights.data, spec.stride[0], spec.stride[1], spec.dilation[0], spec.dilation[1], gx_pad
    )
    h, w = x.shape[2], x.shape[3]
    gx = gx_pad[:, :, top : top + h, left : left + w].astype(x.dtype)

    if not with_param_grads:
        return Tensor(gx), None, None

    gw = np.zeros(weights.shape, dtype=np.float64)
    kernels.conv2d_backward_weights_kernel(
        go, x_pad, spec.stride[0], spec.stride[1], spec.dilation[0], spec.dilation[1], gw
    )
    gb = go.astype(np.float64).sum(axis=(0, 2, 3))
    return Tensor(gx), Tensor(gw.astype(x.dtype)), Tensor(gb.astype(x.dtype))


def maxpool_forward(x: Tensor, spec: PoolSpec):
    """Max pooling; returns (output, argmax) with argmax as flat H*W indices."""
    if x.data.ndim != 4:
        raise ShapeError(f"pool input must be [N,C,H,W], got {x.shape}")
    h_out = spec.out_extent(x.shape[2])
    w_out = spec.out_extent(x.shape[3])
    out = np.empty((x.shape[0], x.shape[1], h_out, w_out), dtype=x.dtype)
    arg = np.empty(out.shape, dtype=np.int64)
    kernels.maxpool_forward_kernel(x.data, spec.extent, spec.stride, out, arg)
    return Tensor(out), arg


def maxpool_backward(grad_out: Tensor, argmax: np.ndarray, input_shape: tuple[int, ...]) -> Tensor:
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match argmax {argmax.shape}")
    gx = np.zeros(input_shape, dtype=grad_out.dtype)
    kernels.maxpool_backward_kernel(grad_out.data, argmax, gx)
    return Tensor(gx)


def relu_forward(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, x.dtype.type(0)))


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    # Derivative at exactly 0 is defined as 0.
    if grad_out.shape != x.shape:
        raise ShapeError(f"relu grad {grad_out.shape} does not match input {x.shape}")
    return Tensor(np.where(x.data > 0, grad_out.data, grad_out.dtype.type(0)))


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """y = x @ W + b for x[N,D], W[D,M], b[M]."""
    if x.data.ndim != 2 or weights.data.ndim != 2:
        raise ShapeError(f"dense needs 2-D operands, got {x.shape} and {weights.shape}")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense inner extents differ: {x.shape} @ {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense bias {bias.shape} must be ({weights.shape[1]},)")
    return Tensor(x.data @ weights.data + bias.data)


def dense_backward(grad_out: Tensor, x: Tensor, weights: Tensor):
    expected = (x.shape[0], weights.shape[1])
    if grad_out.shape != expected:
        raise ShapeError(f"dense grad {grad_out.shape} does not match output {expected}")
    gx = grad_out.data @ weights.data.T
    gw = x.data.T @ grad_out.data
    gb = grad_out.data.sum(axis=0)
    return Tensor(gx), Tensor(gw), Tensor(gb)


def flatten_forward(x: Tensor) -> Tensor:
    """Pure row-major reshape of [N,...] to [N, prod(rest)]."""
    n = x.shape[0]
    return Tensor(x.data.reshape(n, -1))


def flatten_backward(grad_out: Tensor, input_shape: tuple[int, ...]) -> Tensor:
    return Tensor(grad_out.data.reshape(input_shape))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two [N,C,H,W] maps along the channel axis, a first."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError(f"concat needs [N,C,H,W] operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat operands disagree outside channels: {a.shape} vs {b.shape}")
    return Tensor(np.concatenate([a.data, b.data], axis=1))


def concat_backward(grad_out: Tensor, first_channels: int):
    ga = np.ascontiguousarray(grad_out.data[:, :first_channels])
    gb = np.ascontiguousarray(grad_out.data[:, first_channels:])
    return Tensor(ga), Tensor(gb)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability."""
    if logits.data.ndim != 2 or logits.shape[1] < 1:
        raise ShapeError(f"softmax needs [N,C] with C >= 1, got {logits.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return Tensor(e / e.sum(axis=1, keepdims=True))


def softmax_backward(grad_out: Tensor, y: Tensor) -> Tensor:
    """Adjoint through softmax given its output y."""
    if grad_out.shape != y.shape:
        raise ShapeError(f"softmax grad {grad_out.shape} does not match output {y.shape}")
    dot = (grad_out.data * y.data).sum(axis=1, keepdims=True)
    return Tensor(y.data * (grad_out.data - dot))
