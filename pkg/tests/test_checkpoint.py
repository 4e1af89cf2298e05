import numpy as np
import pytest

from dualgr import checkpoint as ckpt


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_round_trip_bit_exact(tmp_path, dtype):
    rng = np.random.default_rng(0)
    named = {
        "emb/level1": rng.normal(size=(8, 4)).astype(dtype),
        "head/b": rng.normal(size=8).astype(dtype),
        "scalarish": np.array(3.25, dtype=dtype),
    }
    path = tmp_path / "model.dgr"
    ckpt.save_tensors(path, named)
    loaded = ckpt.load_tensors(path)
    assert set(loaded) == set(named)
    for name in named:
        assert loaded[name].dtype == dtype
        assert loaded[name].shape == named[name].shape
        assert loaded[name].tobytes() == named[name].tobytes()


def test_save_load_preserves_order_and_bytes_stable(tmp_path):
    named = {"b": np.ones(2, dtype=np.float32), "a": np.zeros(3, dtype=np.float32)}
    p1, p2 = tmp_path / "x1.dgr", tmp_path / "x2.dgr"
    ckpt.save_tensors(p1, named)
    ckpt.save_tensors(p2, named)
    assert p1.read_bytes() == p2.read_bytes()
    assert list(ckpt.load_tensors(p1)) == ["b", "a"]


def test_mixed_dtypes_rejected(tmp_path):
    with pytest.raises(ckpt.CheckpointError, match="mixed"):
        ckpt.save_tensors(
            tmp_path / "bad.dgr",
            {"a": np.ones(1, dtype=np.float32), "b": np.ones(1, dtype=np.float64)},
        )


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.dgr"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        ckpt.load_tensors(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "trail.dgr"
    ckpt.save_tensors(path, {"a": np.ones(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(ckpt.CheckpointError, match="trailing"):
        ckpt.load_tensors(path)


def test_empty_container(tmp_path):
    path = tmp_path / "empty.dgr"
    ckpt.save_tensors(path, {})
    assert ckpt.load_tensors(path) == {}
