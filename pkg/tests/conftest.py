"""
Pytest configuration and fixtures for testing
"""
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from app.rng import make_rng
from app.schemas.audio import AudioBuffer
from app.schemas.ctc import Alphabet
from app.schemas.model import ConvSpec, DropoutConfig, ModelConfig
from app.services.corpus_service import ToyCorpus, generate_toy_corpus
from app.services.ctc_service import log_softmax


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed-seed Philox stream for test data"""
    return make_rng(1234)


@pytest.fixture
def tone() -> Callable[..., AudioBuffer]:
    """Factory for pure sine buffers"""
    def make(frequency: float = 440.0, seconds: float = 1.0, sample_rate: int = 16000,
             amplitude: float = 0.5) -> AudioBuffer:
        t = np.arange(int(round(seconds * sample_rate))) / sample_rate
        return AudioBuffer(samples=amplitude * np.sin(2 * np.pi * frequency * t), sample_rate=sample_rate)
    return make


@pytest.fixture
def random_lattice() -> Callable[..., np.ndarray]:
    """Factory for T x C log-probability lattices"""
    def make(num_frames: int, num_classes: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        return log_softmax(scale * rng.standard_normal((num_frames, num_classes)), axis=1)
    return make


@pytest.fixture
def dominant_frequency() -> Callable[[AudioBuffer], float]:
    """Frequency of the largest FFT bin, refined by parabolic interpolation"""
    def measure(buffer: AudioBuffer) -> float:
        x = buffer.samples * np.hanning(len(buffer))
        spectrum = np.abs(np.fft.rfft(x, n=8 * len(x)))
        k = int(np.argmax(spectrum))
        if 0 < k < len(spectrum) - 1:
            a, b, c = np.log(spectrum[k - 1:k + 2] + 1e-300)
            k = k + 0.5 * (a - c) / (a - 2 * b + c)
        return k * buffer.sample_rate / (8 * len(x))
    return measure


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """Smallest layout exercising every layer type: 9 bins, 3 symbols"""
    return ModelConfig(
        input_bins=9,
        front_conv=ConvSpec.of((2, 3, 3, 2, 2)),
        residual_blocks=[ConvSpec.of((3, 3, 3, 1, 1))],
        rnn_layers=1,
        rnn_hidden=3,
        fc_hidden=4,
        alphabet_size=3,
        dropout=DropoutConfig(),
    )


@pytest.fixture
def small_alphabet() -> Alphabet:
    return Alphabet(("a", "b", "c"))


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory) -> ToyCorpus:
    """Six training and three validation utterances over a 3-symbol alphabet"""
    out_dir: Path = tmp_path_factory.mktemp("toy_corpus")
    return generate_toy_corpus(out_dir, num_train=6, num_val=3, alphabet_size=3, seed=0)
