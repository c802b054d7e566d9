import numpy as np
import pytest

from fedsel.model import CheckpointError, ModelWeights, init_weights, load_checkpoint, save_checkpoint
from fedsel.model.checkpoint import decode_container, encode_container


def test_save_then_load_is_identical(tmp_path):
    w = init_weights(3)
    save_checkpoint(tmp_path / "c.ckpt", w, round_index=4)
    back, t = load_checkpoint(tmp_path / "c.ckpt")
    assert back == w and t == 4


def test_second_save_overwrites_single_file(tmp_path):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, init_weights(1), 1)
    w2 = init_weights(2)
    save_checkpoint(path, w2, 2)
    back, t = load_checkpoint(path)
    assert back == w2 and t == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.ckpt"]


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing.ckpt")


def test_truncated_file_detected(tmp_path):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, init_weights(1))
    data = path.read_bytes()
    for cut in (0, 5, len(data) // 2, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_corrupted_byte_fails_crc(tmp_path):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, ModelWeights({"a": np.arange(8, dtype=np.float32)}))
    data = bytearray(path.read_bytes())
    data[-8] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_container_values_are_little_endian_float32():
    w = ModelWeights({"a": np.array([1.0, -2.5], dtype=np.float32)})
    blob = encode_container(w.manifest, np.array([1.0, -2.5], dtype=np.float32), {})
    assert np.array([1.0, -2.5], dtype="<f4").tobytes() in blob
    manifest, flat, meta = decode_container(blob)
    assert flat.tolist() == [1.0, -2.5] and meta == {}
