import struct
import zlib

import h5py
import numpy as np
import pytest

from ntlconvert import ConversionError, convert, name_map
from ntlconvert.cli import main


def make_source(path, family="vgg16", seed=0, mutate=None):
    """Synthetic HDF5 file in the expected layout, kernels in (kh, kw, in, out)."""
    rng = np.random.default_rng(seed)
    with h5py.File(path, "w") as out:
        for kernel_path, bias_path, _, shape in name_map(family):
            kernel = rng.normal(size=shape).astype(np.float32)
            out.create_dataset(kernel_path, data=kernel)
            out.create_dataset(bias_path, data=rng.normal(size=shape[3]).astype(np.float32))
        if mutate:
            mutate(out)
    return path


def read_ntl(path):
    """Independent minimal reader used only to verify converter output."""
    blob = path.read_bytes()
    payload, trailer = blob[:-4], blob[-4:]
    assert payload[:4] == b"NTL1"
    assert struct.unpack("<I", trailer)[0] == zlib.crc32(payload) & 0xFFFFFFFF
    count = struct.unpack("<I", payload[4:8])[0]
    off = 8
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<I", payload[off : off + 4])
        off += 4
        name = payload[off : off + name_len].decode("utf-8")
        off += name_len
        rank = payload[off]
        off += 1
        shape = struct.unpack("<" + "I" * rank, payload[off : off + 4 * rank])
        off += 4 * rank
        size = int(np.prod(shape)) * 4
        arr = np.frombuffer(payload[off : off + size], dtype="<f4").reshape(shape)
        off += size
        entries.append((name, arr))
    assert off == len(payload)
    return entries


def test_vgg16_yields_26_canonical_entries(tmp_path):
    src = make_source(tmp_path / "w.h5")
    summary = convert(src, "vgg16", tmp_path / "w.ntl")
    assert summary.entries_written == 26
    entries = read_ntl(tmp_path / "w.ntl")
    names = [n for n, _ in entries]
    assert names[0] == "block1_conv1.weights"
    assert names[1] == "block1_conv1.bias"
    assert "block5_conv3.weights" in names
    assert len(names) == 26 and len(set(names)) == 26
    for name, arr in entries:
        if name.endswith(".weights"):
            assert arr.ndim == 4 and arr.shape[2:] == (3, 3)


def test_vgg19_yields_32_entries(tmp_path):
    src = make_source(tmp_path / "w19.h5", family="vgg19")
    summary = convert(src, "vgg19", tmp_path / "w19.ntl")
    assert summary.entries_written == 32


def test_transpose_spot_checks(tmp_path):
    src = make_source(tmp_path / "w.h5", seed=3)
    convert(src, "vgg16", tmp_path / "w.ntl")
    converted = dict(read_ntl(tmp_path / "w.ntl"))
    rng = np.random.default_rng(7)
    with h5py.File(src, "r") as fh:
        for kernel_path, _, layer, shape in name_map("vgg16"):
            original = np.asarray(fh[kernel_path])
            out = converted[f"{layer}.weights"]
            kh, kw, c_in, c_out = shape
            for _ in range(100):
                a = rng.integers(0, kh)
                b = rng.integers(0, kw)
                c = rng.integers(0, c_in)
                k = rng.integers(0, c_out)
                assert out[k, c, a, b] == original[a, b, c, k]


def test_values_survive_bit_exact(tmp_path):
    src = make_source(tmp_path / "w.h5", seed=5)
    convert(src, "vgg16", tmp_path / "w.ntl")
    converted = dict(read_ntl(tmp_path / "w.ntl"))
    with h5py.File(src, "r") as fh:
        for kernel_path, bias_path, layer, _ in name_map("vgg16"):
            want = np.transpose(np.asarray(fh[kernel_path]), (3, 2, 0, 1))
            assert converted[f"{layer}.weights"].tobytes() == np.ascontiguousarray(want).tobytes()
            assert converted[f"{layer}.bias"].tobytes() == np.asarray(fh[bias_path]).tobytes()


def test_rerun_is_byte_identical(tmp_path):
    src = make_source(tmp_path / "w.h5", seed=9)
    convert(src, "vgg16", tmp_path / "a.ntl")
    convert(src, "vgg16", tmp_path / "b.ntl")
    assert (tmp_path / "a.ntl").read_bytes() == (tmp_path / "b.ntl").read_bytes()


def test_missing_layer_listed(tmp_path):
    def drop(out):
        del out["block4_conv2/block4_conv2/kernel:0"]

    src = make_source(tmp_path / "broken.h5", mutate=drop)
    with pytest.raises(ConversionError, match="block4_conv2"):
        convert(src, "vgg16", tmp_path / "x.ntl")
    assert not (tmp_path / "x.ntl").exists()


def test_unexpected_shape_rejected(tmp_path):
    def reshape(out):
        del out["block1_conv1/block1_conv1/kernel:0"]
        out.create_dataset(
            "block1_conv1/block1_conv1/kernel:0",
            data=np.zeros((5, 5, 3, 64), np.float32),
        )

    src = make_source(tmp_path / "odd.h5", mutate=reshape)
    with pytest.raises(ConversionError, match="expected \\(3, 3, 3, 64\\)"):
        convert(src, "vgg16", tmp_path / "x.ntl")


def test_wrong_family_inventory_rejected(tmp_path):
    src = make_source(tmp_path / "w16.h5", family="vgg16")
    with pytest.raises(ConversionError, match="block3_conv4"):
        convert(src, "vgg19", tmp_path / "x.ntl")


def test_cli_round_trip(tmp_path, capsys):
    src = make_source(tmp_path / "w.h5")
    code = main(["--family", "vgg16", "--in", str(src), "--out", str(tmp_path / "w.ntl")])
    assert code == 0
    assert "wrote 26 entries" in capsys.readouterr().out
    assert main(["--family", "vgg16", "--in", str(tmp_path / "nope.h5"),
                 "--out", str(tmp_path / "y.ntl")]) == 2


def test_handshake_with_training_toolkit(tmp_path):
    """Converted output loads into a built graph via the consumer's own reader."""
    dtk = pytest.importorskip("dtk")
    from dtk import ntl, vgg

    src = make_source(tmp_path / "w.h5", seed=13)
    convert(src, "vgg16", tmp_path / "w.ntl")

    graph = vgg.build(vgg.catalog()["vgg16_proposed"], vgg.PretrainedInit(tmp_path / "w.ntl"))
    entries = dict(ntl.read(tmp_path / "w.ntl"))
    assert np.array_equal(
        graph.params["block3_conv1.weights"].data, entries["block3_conv1.weights"]
    )
    # both block-5 branches seeded from the same unsuffixed source weights
    assert np.array_equal(
        graph.params["block5_conv2_br1.weights"].data, entries["block5_conv2.weights"]
    )
    assert np.array_equal(
        graph.params["block5_conv2_br2.weights"].data, entries["block5_conv2.weights"]
    )
