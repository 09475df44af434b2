"""
Tests for the binary checkpoint format
"""
import struct

import numpy as np
import pytest

from app.exceptions import CheckpointError
from app.models.checkpoint import (
    MAGIC,
    Checkpoint,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    load_checkpoint,
    save_checkpoint,
)
from app.models.speech_model import init_params, init_state
from app.rng import make_rng


@pytest.fixture
def checkpoint(tiny_model_config) -> Checkpoint:
    return Checkpoint(
        config=tiny_model_config,
        params=init_params(tiny_model_config, make_rng(0)),
        state=init_state(tiny_model_config),
        alphabet=("a", "b", "c"),
    )


class TestCheckpoint:
    """Test checkpoint persistence"""

    def test_save_and_load(self, tmp_path, checkpoint):
        """Every tensor, the config and the alphabet survive bit-exactly"""
        path = tmp_path / "model.ckpt"

        save_checkpoint(checkpoint, path)
        restored = load_checkpoint(path)

        assert restored.config == checkpoint.config
        assert restored.alphabet == ("a", "b", "c")
        assert set(restored.params) == set(checkpoint.params)
        for name, value in checkpoint.params.items():
            np.testing.assert_array_equal(restored.params[name], value)
        for name, value in checkpoint.state.items():
            np.testing.assert_array_equal(restored.state[name], value)

    def test_encoding_is_deterministic(self, checkpoint):
        """Equal checkpoints encode to identical bytes"""
        assert checkpoint_to_bytes(checkpoint) == checkpoint_to_bytes(checkpoint)

    def test_bad_magic(self, checkpoint):
        data = b"X" + checkpoint_to_bytes(checkpoint)[1:]

        with pytest.raises(CheckpointError, match="magic"):
            checkpoint_from_bytes(data)

    def test_unknown_version(self, checkpoint):
        data = checkpoint_to_bytes(checkpoint)
        data = MAGIC + struct.pack("<I", 99) + data[len(MAGIC) + 4:]

        with pytest.raises(CheckpointError, match="version"):
            checkpoint_from_bytes(data)

    def test_truncated(self, checkpoint):
        """A cut-off file names what was being read"""
        data = checkpoint_to_bytes(checkpoint)

        with pytest.raises(CheckpointError, match="truncated"):
            checkpoint_from_bytes(data[:-5])

    def test_trailing_bytes(self, checkpoint):
        with pytest.raises(CheckpointError, match="trailing"):
            checkpoint_from_bytes(checkpoint_to_bytes(checkpoint) + b"\x00")

    def test_shape_mismatch(self, tmp_path, checkpoint):
        """Tensors must match the shapes implied by the stored config"""
        checkpoint.params["fc.w"] = np.zeros((2, 2))
        path = tmp_path / "bad.ckpt"
        save_checkpoint(checkpoint, path)

        with pytest.raises(CheckpointError, match="fc.w"):
            load_checkpoint(path)

    def test_missing_state(self, tmp_path, checkpoint):
        del checkpoint.state["fc.bn.var"]
        path = tmp_path / "bad.ckpt"
        save_checkpoint(checkpoint, path)

        with pytest.raises(CheckpointError, match="fc.bn.var"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")
