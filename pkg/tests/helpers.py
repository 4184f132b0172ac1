"""Shared oracles for the test suite.

The gradient oracle is central finite differences in double precision; the
convolution oracle is an independent direct-summation implementation that
follows the documented accumulation order (float64, bias first, then taps in
channel/row/col order) so the dilation-1 comparison can be exact.
"""

from __future__ import annotations

import numpy as np

from dtk.tensor import Tensor


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(numeric))) if numeric.size else 0.0)
    return float(np.max(np.abs(analytic - numeric))) / scale if analytic.size else 0.0


def numerical_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar-valued f at x, elementwise."""
    x = x.astype(np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x)
        flat[i] = orig - h
        f_minus = f(x)
        flat[i] = orig
        grad.ravel()[i] = (f_plus - f_minus) / (2 * h)
    return grad


def check_grad(f, x: np.ndarray, analytic: np.ndarray, tol: float = 1e-6, h: float = 1e-5):
    numeric = numerical_grad(f, x, h)
    err = rel_err(analytic, numeric)
    assert err <= tol, f"gradient mismatch: rel err {err:.3e} > {tol}"
    return err


def conv_reference(
    x: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    stride=(1, 1),
    dilation=(1, 1),
    padding=(0, 0, 0, 0),
) -> np.ndarray:
    """Direct-summation convolution, independent of the package kernels."""
    top, bottom, left, right = padding
    xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
    n_b, c_in, h_in, w_in = xp.shape
    k_out, _, k_h, k_w = weights.shape
    sh, sw = stride
    rh, rw = dilation
    eff_h = k_h + (k_h - 1) * (rh - 1)
    eff_w = k_w + (k_w - 1) * (rw - 1)
    h_out = (h_in - eff_h) // sh + 1
    w_out = (w_in - eff_w) // sw + 1
    out = np.empty((n_b, k_out, h_out, w_out), dtype=x.dtype)
    for n in range(n_b):
        for k in range(k_out):
            for i in range(h_out):
                for j in range(w_out):
                    acc = np.float64(bias[k])
                    for c in range(c_in):
                        for a in range(k_h):
                            for b in range(k_w):
                                acc += np.float64(
                                    xp[n, c, i * sh + a * rh, j * sw + b * rw]
                                ) * np.float64(weights[k, c, a, b])
                    out[n, k, i, j] = out.dtype.type(acc)
    return out


def zero_inserted(weights: np.ndarray, dilation=(1, 1)) -> np.ndarray:
    """Expand a kernel by inserting (r - 1) zeros between consecutive taps."""
    k_out, c_in, k_h, k_w = weights.shape
    rh, rw = dilation
    eff_h = k_h + (k_h - 1) * (rh - 1)
    eff_w = k_w + (k_w - 1) * (rw - 1)
    out = np.zeros((k_out, c_in, eff_h, eff_w), dtype=weights.dtype)
    out[:, :, ::rh, ::rw] = weights
    return out


def t64(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64))


# --- synthetic dataset fabrication -----------------------------------------

def class_prototypes(num_classes: int, seed: int = 7) -> np.ndarray:
    """Smooth, well-separated uint8 patterns, one per class."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    protos = np.empty((num_classes, 3, 32, 32), dtype=np.float64)
    for cls in range(num_classes):
        for ch in range(3):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * (fy * yy + fx * xx) / 32 + phase)
            protos[cls, ch] = 128 + 100 * wave
    return np.clip(protos, 0, 255).astype(np.uint8)


def synthetic_cifar10_records(n: int, seed: int, noise: float = 25.0):
    """(images uint8 [n,3,32,32], labels uint8 [n]) with learnable structure."""
    rng = np.random.default_rng(seed)
    protos = class_prototypes(10)
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    images = protos[labels].astype(np.float64)
    images += rng.normal(0, noise, size=images.shape)
    return np.clip(images, 0, 255).astype(np.uint8), labels


def write_cifar10_dir(dest, seed: int = 0) -> None:
    """Write the six full-size binary batch files with synthetic records."""
    dest.mkdir(parents=True, exist_ok=True)
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]
    for fi, name in enumerate(names):
        images, labels = synthetic_cifar10_records(10_000, seed * 100 + fi)
        record = np.empty((10_000, 3073), dtype=np.uint8)
        record[:, 0] = labels
        record[:, 1:] = images.reshape(10_000, 3072)
        (dest / name).write_bytes(record.tobytes())
