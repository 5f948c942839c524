import numpy as np
import pytest

from fusionseg.checkpoint import (load_checkpoint, load_into_params,
                                  save_checkpoint)
from fusionseg.errors import IOError_
from fusionseg.tensor import Tensor


def test_roundtrip_values(tmp_path):
    rng = np.random.default_rng(0)
    named = [("a.w", rng.normal(size=(2, 3))), ("b", rng.normal(size=(4,)))]
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, named)
    loaded = load_checkpoint(path)
    assert list(loaded) == ["a.w", "b"]
    for name, arr in named:
        assert np.array_equal(loaded[name], arr)


def test_save_load_save_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    named = [("w", rng.normal(size=(3, 3, 3, 3))), ("scalar", np.array(2.5))]
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, named)
    save_checkpoint(p2, list(load_checkpoint(p1).items()))
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, [("t", np.zeros((2, 2)))])
    raw = path.read_bytes()
    assert raw[:4] == b"DFSG"
    assert raw[4:6] == b"\x01\x00"          # version u16 LE
    assert raw[6:10] == b"\x01\x00\x00\x00"  # tensor count u32 LE


def test_load_into_params(tmp_path):
    src = Tensor(np.arange(6, dtype=float).reshape(2, 3), requires_grad=True)
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, [("p", src.data)])
    dst = Tensor(np.zeros((2, 3)), requires_grad=True)
    load_into_params(path, [("p", dst)])
    assert np.array_equal(dst.data, src.data)


def test_missing_tensor_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, [("p", np.zeros(2))])
    with pytest.raises(IOError_):
        load_into_params(path, [("q", Tensor(np.zeros(2)))])


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(IOError_):
        load_checkpoint(path)
