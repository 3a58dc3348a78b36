import struct

import numpy as np
import pytest

from mtgnn.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from mtgnn.exceptions import CheckpointError


@pytest.fixture
def ckpt(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    blobs = {"w": rng.normal(size=(2, 3)), "b": rng.normal(size=4), "s": np.array(2.5)}
    save_checkpoint(path, {"layers": 3, "rate": 0.05, "flag": True, "mode": "uni_directed"}, blobs)
    return path, blobs


def test_round_trip_values(ckpt):
    path, blobs = ckpt
    config, loaded = load_checkpoint(path)
    assert config == {"flag": "true", "layers": "3", "mode": "uni_directed", "rate": "0.05"}
    for k, v in blobs.items():
        assert loaded[k].shape == np.shape(v) and np.array_equal(loaded[k], v)


def test_round_trip_is_byte_identical(ckpt, tmp_path):
    path, _ = ckpt
    config, blobs = load_checkpoint(path)
    again = tmp_path / "again.ckpt"
    save_checkpoint(again, config, blobs)
    assert again.read_bytes() == path.read_bytes()


def test_byte_layout(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"a": 1}, {"v": np.array([1.0, -2.0])})
    raw = path.read_bytes()
    expected = (MAGIC + struct.pack("<I", 4) + b"a=1\n" + struct.pack("<I", 1)
                + struct.pack("<I", 1) + b"v" + struct.pack("<I", 1) + struct.pack("<Q", 2)
                + struct.pack("<2d", 1.0, -2.0))
    assert raw == expected


@pytest.mark.parametrize("cut", [3, 10, 30, -5])
def test_truncated_file(ckpt, tmp_path, cut):
    path, _ = ckpt
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_bad_magic_and_trailing(ckpt, tmp_path):
    path, _ = ckpt
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTIT!" + path.read_bytes()[6:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)
    bad.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(bad)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")
