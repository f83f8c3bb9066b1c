import numpy as np
import pytest

from _cases import TINY
from choixgrade.checkpoint import (Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint,
                                   write_checkpoint)
from choixgrade.errors import ConfigMismatch, CorruptFile, MissingFile, VersionMismatch
from choixgrade.nn import MiniResNetConfig, build_mini_resnet, forward, predict_logits


@pytest.fixture
def trained_model(rng):
    model = build_mini_resnet(TINY, 4)
    for _ in range(3):  # non-trivial running statistics
        forward(model, rng.standard_normal((8, 1, 8, 8)), "train")
    return model


def test_round_trip_logits_bit_exact(trained_model, tmp_path, rng):
    save_checkpoint(trained_model, {"epoch": 3, "best_val_accuracy": 0.5}, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    assert loaded.meta == {"epoch": 3, "best_val_accuracy": 0.5}
    assert loaded.config == TINY
    for _ in range(10):
        x = rng.standard_normal((5, 1, 8, 8)).astype(np.float32)
        assert np.array_equal(predict_logits(trained_model, x), predict_logits(loaded, x))


def test_state_preserved(trained_model):
    ck = Checkpoint.from_bytes(Checkpoint.from_model(trained_model, {"a": 1}).to_bytes())
    for k, v in trained_model.state().items():
        assert ck.state[k].dtype == np.float32 and np.array_equal(ck.state[k], v)
    assert ck.meta == {"a": 1}


def test_serialisation_is_deterministic(trained_model):
    a = Checkpoint.from_model(trained_model, {"x": 1, "b": 2}).to_bytes()
    assert a == Checkpoint.from_model(trained_model, {"b": 2, "x": 1}).to_bytes()
    assert a.startswith(b"CHOIXGRADE-CHECKPOINT 1\n")


@pytest.mark.parametrize("cut", [10, 200, -1, -4096])
def test_truncated_is_corrupt(trained_model, cut):
    data = Checkpoint.from_model(trained_model).to_bytes()
    with pytest.raises(CorruptFile):
        Checkpoint.from_bytes(data[:cut])


def test_corrupt_variants(trained_model):
    data = Checkpoint.from_model(trained_model).to_bytes()
    for bad in (b"", b"garbage\n" + data, data + b"\x00\x00\x00\x00", data.replace(b"tensors ", b"tensorz ", 1)):
        with pytest.raises(CorruptFile):
            Checkpoint.from_bytes(bad)


def test_version_mismatch(trained_model):
    data = Checkpoint.from_model(trained_model).to_bytes()
    with pytest.raises(VersionMismatch):
        Checkpoint.from_bytes(data.replace(b"CHOIXGRADE-CHECKPOINT 1", b"CHOIXGRADE-CHECKPOINT 2", 1))


def test_config_mismatch(trained_model, tmp_path):
    save_checkpoint(trained_model, None, tmp_path / "m.ckpt")
    with pytest.raises(ConfigMismatch):
        load_checkpoint(tmp_path / "m.ckpt", MiniResNetConfig())
    with pytest.raises(ConfigMismatch):
        read_checkpoint(tmp_path / "m.ckpt").restore_into(build_mini_resnet())


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        read_checkpoint(tmp_path / "nope.ckpt")
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_write_is_atomic(trained_model, tmp_path):
    path = tmp_path / "m.ckpt"
    write_checkpoint(Checkpoint.from_model(trained_model), path)
    assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]
