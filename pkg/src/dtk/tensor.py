"""Dense row-major tensors plus the small arithmetic core the layer ops build on.

Training runs in float32; float64 is used by the finite-difference gradient
checks, where float32 rounding noise would drown the comparison signal. Both
dtypes go through the same API.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _check_finite(arr: np.ndarray, context: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values after {context}")


class Tensor:
    """A dense N-dimensional real array, stored flat in row-major (C) order.

    Tensors are treated as immutable values once built; the only sanctioned
    mutation path is the optimizer writing through ``data`` between steps,
    under exclusive access.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            probe = np.asarray(data)
            dtype = probe.dtype if probe.dtype in _ALLOWED_DTYPES else np.float32
        self.data = np.ascontiguousarray(data, dtype=dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def to_values(self) -> list[float]:
        """Flat row-major contents as Python floats."""
        return self.data.ravel().tolist()

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype, copy=False))

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_scalar(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


def _validated_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeError(f"negative extent in shape {shape}")
    return shape


def zeros(shape: Sequence[int], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(_validated_shape(shape), dtype=dtype))


def ones(shape: Sequence[int], dtype=np.float32) -> Tensor:
    return Tensor(np.ones(_validated_shape(shape), dtype=dtype))


def from_values(shape: Sequence[int], values, dtype=np.float32) -> Tensor:
    """Build a tensor with exactly the given flat row-major contents."""
    shape = _validated_shape(shape)
    flat = np.asarray(values, dtype=dtype).ravel()
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if flat.size != expected:
        raise ShapeError(f"got {flat.size} values for shape {shape} (need {expected})")
    _check_finite(flat, "construction")
    return Tensor(flat.reshape(shape))


def _binary(a: Tensor, b: Tensor, fn, name: str) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(a.data, b.data)
    _check_finite(out, name)
    return Tensor(out)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.add, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.subtract, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.multiply, "mul")


def add_scalar(a: Tensor, s: float) -> Tensor:
    out = a.data + a.dtype.type(s)
    _check_finite(out, "add_scalar")
    return Tensor(out)


def mul_scalar(a: Tensor, s: float) -> Tensor:
    out = a.data * a.dtype.type(s)
    _check_finite(out, "mul_scalar")
    return Tensor(out)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product; inner extents must match."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    _check_finite(out, "matmul")
    return Tensor(out)
