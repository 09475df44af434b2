"""
Audio buffer type shared by I/O, augmentation and feature extraction
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AudioBuffer:
    """
    Mono audio as float64 samples nominally in [-1, 1]

    Samples outside [-1, 1] are allowed while processing; clipping happens
    only when writing a WAV file.
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be one-dimensional, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        """Duration in seconds"""
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        """New buffer at the same rate"""
        return AudioBuffer(samples=samples, sample_rate=self.sample_rate)
