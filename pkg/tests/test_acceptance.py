"""Acceptance gate: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The smoke-training criterion
trains on synthetic records written in the exact CIFAR-10 binary layout; point
DTK_CIFAR10_DIR at a real binary distribution to run it on the actual dataset.
"""

import dataclasses
import math
import os
import time

import numpy as np
import pytest

import dtk
from dtk import ConvSpec, PoolSpec, Tensor, ntl, rf, vgg
from dtk.cifar import decode_cifar10_bytes, decode_cifar100_bytes
from dtk.cli import main
from dtk.errors import FormatError, ShapeError
from dtk.ops import (
    concat_backward,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    flatten_backward,
    flatten_forward,
    maxpool_backward,
    maxpool_forward,
    relu_backward,
    relu_forward,
    softmax,
)
from dtk.train import AdamState, PlateauScheduler, adam_step, cross_entropy

from helpers import check_grad, conv_reference, t64, zero_inserted

GRAD_TOL = 1e-6
FD_H = 1e-5


def ok(name: str) -> None:
    print(f"[ACCEPTANCE] {name}: PASS")


# --- criterion: gradient suite ------------------------------------------------

def _tieless(rng, shape):
    """Values with pairwise gaps far above the FD step (pooling tie safety)."""
    n = int(np.prod(shape))
    vals = rng.permutation(n) / n + rng.uniform(0, 0.1 / n, size=n)
    return vals.reshape(shape)


def _conv_instance(rng, rate):
    k = int(rng.integers(1, 4))
    spec = ConvSpec(
        2, 2,
        kernel=(k, k),
        dilation=(rate, rate),
        stride=(int(rng.integers(1, 3)), 1),
        padding=tuple(int(v) for v in rng.integers(0, 2, size=4)),
    )
    eff_h, eff_w = spec.effective_kernel
    h = min(eff_h + int(rng.integers(0, 3)) + 1, 6 + eff_h)
    w = min(eff_w + int(rng.integers(0, 3)) + 1, 6 + eff_w)
    x = rng.normal(size=(2, 2, h, w))
    wt = rng.normal(size=(2, 2, k, k))
    b = rng.normal(size=2)
    return spec, x, wt, b


def test_gradient_suite():
    start = time.monotonic()
    instances = 20

    for rate in (1, 2, 4):
        for i in range(instances):
            rng = np.random.default_rng(1000 * rate + i)
            spec, x, wt, b = _conv_instance(rng, rate)
            out = conv2d_forward(t64(x), t64(wt), t64(b), spec)
            g_out = rng.normal(size=out.shape)
            gi, gw, gb = conv2d_backward(t64(g_out), t64(x), t64(wt), spec)

            def conv_loss(xx=None, ww=None, bb=None):
                def f(v):
                    ax = t64(v) if xx else t64(x)
                    aw = t64(v) if ww else t64(wt)
                    ab = t64(v) if bb else t64(b)
                    return float((conv2d_forward(ax, aw, ab, spec).data * g_out).sum())
                return f

            check_grad(conv_loss(xx=True), x, gi.data, GRAD_TOL, FD_H)
            check_grad(conv_loss(ww=True), wt, gw.data, GRAD_TOL, FD_H)
            check_grad(conv_loss(bb=True), b, gb.data, GRAD_TOL, FD_H)

    for i in range(instances):
        rng = np.random.default_rng(2000 + i)
        x = _tieless(rng, (1, 2, 4, 4))
        g_out = rng.normal(size=(1, 2, 2, 2))
        spec = PoolSpec(2, 2)
        _, arg = maxpool_forward(t64(x), spec)
        gi = maxpool_backward(t64(g_out), arg, x.shape)
        check_grad(
            lambda v: float((maxpool_forward(t64(v), spec)[0].data * g_out).sum()),
            x, gi.data, GRAD_TOL, FD_H,
        )

    for i in range(instances):
        rng = np.random.default_rng(3000 + i)
        x = rng.uniform(0.1, 1.0, size=(3, 5)) * rng.choice([-1.0, 1.0], size=(3, 5))
        g_out = rng.normal(size=(3, 5))
        gi = relu_backward(t64(g_out), t64(x))
        check_grad(
            lambda v: float((relu_forward(t64(v)).data * g_out).sum()),
            x, gi.data, GRAD_TOL, FD_H,
        )

    for i in range(instances):
        rng = np.random.default_rng(4000 + i)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        g_out = rng.normal(size=(3, 2))
        gi, gw, gb = dense_backward(t64(g_out), t64(x), t64(w))
        check_grad(lambda v: float((dense_forward(t64(v), t64(w), t64(b)).data * g_out).sum()),
                   x, gi.data, GRAD_TOL, FD_H)
        check_grad(lambda v: float((dense_forward(t64(x), t64(v), t64(b)).data * g_out).sum()),
                   w, gw.data, GRAD_TOL, FD_H)
        check_grad(lambda v: float((dense_forward(t64(x), t64(w), t64(v)).data * g_out).sum()),
                   b, gb.data, GRAD_TOL, FD_H)

    for i in range(instances):
        rng = np.random.default_rng(5000 + i)
        x = rng.normal(size=(2, 2, 3, 3))
        g_out = rng.normal(size=(2, 18))
        gi = flatten_backward(t64(g_out), x.shape)
        check_grad(lambda v: float((flatten_forward(t64(v)).data * g_out).sum()),
                   x, gi.data, GRAD_TOL, FD_H)

    for i in range(instances):
        rng = np.random.default_rng(6000 + i)
        a = rng.normal(size=(1, 2, 3, 3))
        b = rng.normal(size=(1, 3, 3, 3))
        g_out = rng.normal(size=(1, 5, 3, 3))
        ga, gb = concat_backward(t64(g_out), 2)
        check_grad(lambda v: float((concat_channels(t64(v), t64(b)).data * g_out).sum()),
                   a, ga.data, GRAD_TOL, FD_H)
        check_grad(lambda v: float((concat_channels(t64(a), t64(v)).data * g_out).sum()),
                   b, gb.data, GRAD_TOL, FD_H)

    for i in range(instances):
        rng = np.random.default_rng(7000 + i)
        logits = rng.normal(size=(4, 6))
        labels = rng.integers(0, 6, size=4)
        _, grad = cross_entropy(softmax(t64(logits)), labels)
        check_grad(lambda v: cross_entropy(softmax(t64(v)), labels)[0],
                   logits, grad.data, GRAD_TOL, FD_H)

    elapsed = time.monotonic() - start
    assert elapsed < 60, f"gradient suite took {elapsed:.1f}s (budget 60s)"
    ok(f"gradient suite ({elapsed:.1f}s)")


# --- criterion: dilation oracle -------------------------------------------------

def test_dilation_oracle():
    for i in range(100):
        rng = np.random.default_rng(i)
        rate = int(rng.choice([2, 3, 4]))
        k = int(rng.integers(2, 4))
        c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        spec = ConvSpec(c_in, c_out, kernel=(k, k), dilation=(rate, rate))
        eff = spec.effective_kernel[0]
        h = eff + int(rng.integers(0, 4))
        x = rng.normal(size=(1, c_in, h, h)).astype(np.float32)
        w = rng.normal(size=(c_out, c_in, k, k)).astype(np.float32)
        b = rng.normal(size=c_out).astype(np.float32)
        dilated = conv2d_forward(Tensor(x), Tensor(w), Tensor(b), spec)
        standard = conv_reference(x, zero_inserted(w, (rate, rate)), b)
        assert np.max(np.abs(dilated.data - standard)) <= 1e-6
    ok("dilation oracle (100 instances, r in {2,3,4})")


# --- criterion: shape audit ------------------------------------------------------

def test_shape_audit():
    for label, cfg in vgg.catalog().items():
        for classes in (10, 100):
            sized = dataclasses.replace(cfg, num_classes=classes)
            g = vgg.build(sized, vgg.RandomInit(0))
            logits, cache = g.forward(Tensor(np.zeros((2, 3, 32, 32), np.float32)))
            assert logits.shape == (2, classes), label
            extents = [cache["acts"][f"block{i}_pool"].shape[2] for i in range(1, 6)]
            assert extents == [16, 8, 4, 2, 1], label
            if len(cfg.blocks[4].dilations) == 2:
                assert cache["acts"]["block5_concat"].shape[1] == 1024, label
    ok("shape audit (8 configurations x 2 class counts)")


# --- criterion: pooling formula ---------------------------------------------------

def test_pooling_formula():
    rng = np.random.default_rng(0)
    checked = invalid = 0
    while checked < 50 or invalid < 10:
        m = int(rng.integers(2, 40))
        f = int(rng.integers(1, 7))
        s = int(rng.integers(1, 7))
        spec = PoolSpec(f, s)
        x = dtk.zeros([1, 1, m, m])
        if f <= m and (m - f) % s == 0:
            out, _ = maxpool_forward(x, spec)
            assert out.shape[2] == (m - f) // s + 1
            checked += 1
        else:
            with pytest.raises(ShapeError):
                maxpool_forward(x, spec)
            invalid += 1
    ok(f"pooling formula ({checked} valid, {invalid} non-divisible)")


# --- criterion: freeze contract ----------------------------------------------------

def test_freeze_contract():
    g = vgg.build(vgg.catalog()["vgg16_proposed"], vgg.RandomInit(1))
    before = {name: t.data.copy() for name, t in g.params.items()}

    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 3, 32, 32)).astype(np.float32))
    labels = rng.integers(0, 10, size=2)
    trainable = g.trainable_params()
    state = AdamState(trainable)
    for _ in range(50):
        probs, cache = g.forward(x)
        _, grad_logits = cross_entropy(probs, labels)
        grads, _ = g.backward(cache, grad_logits)
        adam_step(trainable, grads, state, lr=1e-3)

    frozen_names = [n for n in g.params if n.startswith(("block1_", "block2_"))]
    changed_names = [n for n in g.params if n not in frozen_names]
    assert frozen_names and changed_names
    for name in frozen_names:
        assert np.array_equal(g.params[name].data, before[name]), name
    for name in changed_names:
        assert not np.array_equal(g.params[name].data, before[name]), name
    ok("freeze contract (50 Adam steps: blocks 1-2 bit-identical, rest moved)")


# --- criterion: scheduler -----------------------------------------------------------

def test_scheduler_decay_arithmetic():
    sched = PlateauScheduler(1e-5, patience=7, factor=math.sqrt(0.05))
    sched.step(1.0)
    for _ in range(7):
        lr = sched.step(1.0)
    assert abs(lr - 1e-5 * math.sqrt(0.05)) <= 1e-12

    for _ in range(7):
        lr = sched.step(1.0)
    assert abs(lr / 1e-5 - 0.05) <= 1e-12
    ok("scheduler (sqrt(0.05) per plateau, 0.05 after two)")


# --- criterion: loss identities -------------------------------------------------------

def test_loss_identities():
    probs = Tensor(np.full((5, 10), 0.1, dtype=np.float64))
    loss, _ = cross_entropy(probs, np.arange(5))
    assert abs(loss - math.log(10)) <= 1e-6
    assert abs(loss - 2.302585) <= 1e-6

    rng = np.random.default_rng(3)
    p = softmax(t64(rng.normal(size=(1, 10))))
    _, grad = cross_entropy(p, np.array([6]))
    expected = p.data.copy()
    expected[0, 6] -= 1.0
    assert np.array_equal(grad.data, expected)
    ok("loss identities (ln 10 and exact fused gradient)")


# --- criterion: gridding reproduction ---------------------------------------------------

def test_gridding_reproduction():
    equal_rates = [rf.ScheduleLayer(3, 2)] * 3
    cov = rf.coverage(equal_rates)
    assert cov.span == (13, 13)
    assert cov.density < 1.0

    mixed = [rf.ScheduleLayer(3, 1), rf.ScheduleLayer(3, 2), rf.ScheduleLayer(3, 3)]
    cov_mixed = rf.coverage(mixed)
    assert cov_mixed.span == (13, 13)
    assert cov_mixed.density == 1.0

    for schedule in (equal_rates, mixed):
        assert np.array_equal(rf.coverage(schedule).mask, rf.coverage_probe(schedule).mask)
    ok("gridding reproduction (span 13: density < 1 equal rates, = 1 mixed)")


# --- criterion: smoke training -------------------------------------------------------------

SMOKE_BUDGET_S = 15 * 60


def _smoke_args(data_dir, out_dir):
    # Reduced-scale recipe: width / 8, 2000 train + 500 val records, 10 epochs.
    # Augmentation is covered by its own tests; at this scale it would only
    # slow the learnability check down.
    return [
        "train", "--config", "configs/catalog/vgg16_proposed.cfg",
        "--data-dir", str(data_dir), "--out-dir", str(out_dir),
        "--set", "channel_div=8", "--set", "epochs=10",
        "--set", "train_subset=2000", "--set", "val_subset=500",
        "--set", "base_lr=1e-3", "--set", "batch_size=32", "--set", "seed=42",
        "--set", "augment=false",
    ]


def test_smoke_training(cifar10_dir, tmp_path):
    data_dir = os.environ.get("DTK_CIFAR10_DIR", str(cifar10_dir))

    start = time.monotonic()
    assert main(_smoke_args(data_dir, tmp_path / "a")) == 0
    first = time.monotonic() - start
    assert first <= SMOKE_BUDGET_S, f"run took {first:.0f}s (budget {SMOKE_BUDGET_S}s)"

    metrics = (tmp_path / "a" / "metrics.csv").read_text()
    rows = metrics.strip().splitlines()
    assert rows[0] == "epoch,train_loss,train_acc,val_loss,val_acc,lr"
    final_val_acc = float(rows[10].split(",")[4])
    assert final_val_acc >= 0.30, f"val accuracy {final_val_acc:.3f} below 0.30"

    assert main(_smoke_args(data_dir, tmp_path / "b")) == 0
    second = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert second == metrics.encode(), "metrics.csv differs between equal-seed runs"
    ok(f"smoke training (val acc {final_val_acc:.3f} >= 0.30, {first:.0f}s, byte-identical rerun)")


# --- criterion: format golden tests ----------------------------------------------------------

def test_format_golden():
    # Two hand-assembled records per dataset; pixel bytes encode their position.
    def rec10(label, off):
        return bytes([label]) + bytes((plane * 3 + pos + off) % 256
                                      for plane in range(3) for pos in range(1024))

    images, labels = decode_cifar10_bytes(rec10(1, 0) + rec10(7, 11))
    assert labels.tolist() == [1, 7]
    assert images[0, 2, 0, 5] == (2 * 3 + 5) % 256
    assert images[1, 0, 3, 4] == (3 * 32 + 4 + 11) % 256

    def rec100(coarse, fine, off):
        return bytes([coarse, fine]) + bytes((pos + off) % 256 for pos in range(3072))

    images, fine, coarse = decode_cifar100_bytes(rec100(3, 61, 2) + rec100(9, 0, 4))
    assert fine.tolist() == [61, 0] and coarse.tolist() == [3, 9]
    assert images[0, 0, 0, 0] == 2 and images[1, 0, 0, 1] == 5

    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "roundtrip.ntl"
        entries = [
            ("block1_conv1.weights", np.random.default_rng(0).normal(size=(4, 3, 3, 3)).astype(np.float32)),
            ("block1_conv1.bias", np.zeros(4, np.float32)),
        ]
        ntl.write(path, entries)
        back = ntl.read(path)
        for (n0, a0), (n1, a1) in zip(entries, back):
            assert n0 == n1 and a0.tobytes() == a1.tobytes()

        blob = path.read_bytes()
        truncated = Path(tmp) / "short.ntl"
        truncated.write_bytes(blob[:-9])
        with pytest.raises(FormatError):
            ntl.read(truncated)

        corrupted = Path(tmp) / "flip.ntl"
        mutated = bytearray(blob)
        mutated[len(mutated) // 2] ^= 0x01
        corrupted.write_bytes(bytes(mutated))
        with pytest.raises(FormatError):
            ntl.read(corrupted)
    ok("format golden tests (record decode, bit-exact round trip, corruption)")
