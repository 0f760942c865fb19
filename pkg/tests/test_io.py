import numpy as np
import pytest

from sasr import ConfigError, ImageTensor
from sasr.io import (
    read_model,
    read_nt1,
    read_png,
    write_model,
    write_nt1,
    write_png,
)


def test_nt1_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = ImageTensor(rng.random((3, 5, 7)))
    path = tmp_path / "t.nt1"
    write_nt1(img, path)
    back = read_nt1(path)
    assert back.shape == img.shape
    assert np.array_equal(back.data, img.data)


def test_nt1_header_layout(tmp_path):
    img = ImageTensor(np.arange(6.0).reshape(1, 2, 3))
    path = tmp_path / "t.nt1"
    write_nt1(img, path)
    blob = path.read_bytes()
    assert blob[:4] == b"NT1\x00"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 2
    assert int.from_bytes(blob[12:16], "little") == 3
    assert len(blob) == 16 + 6 * 8
    # channel-major little-endian float64 payload
    assert np.frombuffer(blob[16:], dtype="<f8").tolist() == list(range(6))


def test_nt1_bad_magic(tmp_path):
    path = tmp_path / "bad.nt1"
    path.write_bytes(b"JUNKxxxx")
    with pytest.raises(ConfigError):
        read_nt1(path)


def test_nt1_truncated(tmp_path):
    img = ImageTensor(np.ones((1, 2, 2)))
    path = tmp_path / "t.nt1"
    write_nt1(img, path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ConfigError):
        read_nt1(path)


@pytest.mark.parametrize("channels", [1, 3])
def test_png_roundtrip_255(tmp_path, channels):
    rng = np.random.default_rng(1)
    quantized = rng.integers(0, 256, size=(channels, 6, 4)) / 255.0
    img = ImageTensor(quantized)
    path = tmp_path / "t.png"
    write_png(img, path)
    back = read_png(path)
    assert back.shape == img.shape
    assert np.abs(back.data - img.data).max() < 1e-12


def test_model_container_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    params = {
        "conv.k": rng.normal(size=(4, 2, 3, 3)),
        "conv.b": rng.normal(size=(4,)),
        "dense.w": rng.normal(size=(1, 9)),
    }
    path = tmp_path / "m.nt1d"
    write_model(params, path, meta={"kind": "generator", "seed": 7})
    loaded, meta = read_model(path)
    assert meta["seed"] == 7
    assert list(loaded) == list(params)
    for name in params:
        assert np.array_equal(loaded[name], params[name])


def test_model_container_deterministic_bytes(tmp_path):
    params = {"a": np.ones((2, 2)), "b": np.zeros(3)}
    p1, p2 = tmp_path / "m1.bin", tmp_path / "m2.bin"
    write_model(params, p1, meta={"x": 1})
    write_model(params, p2, meta={"x": 1})
    assert p1.read_bytes() == p2.read_bytes()
