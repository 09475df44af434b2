"""
Spectrogram and dataset statistics types
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Spectrogram:
    """Log-power spectrogram, frames x bins"""
    data: np.ndarray
    sample_rate: int
    frame_ms: float = 20.0
    hop_ms: float = 10.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"spectrogram data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.data.shape[1])

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data=data, sample_rate=self.sample_rate,
                           frame_ms=self.frame_ms, hop_ms=self.hop_ms)


@dataclass(frozen=True)
class FeatureStats:
    """Per-bin mean and population variance over a set of frames"""
    mean: np.ndarray
    variance: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        variance = np.asarray(self.variance, dtype=np.float64)
        if mean.shape != variance.shape or mean.ndim != 1:
            raise ValueError("mean and variance must be 1-D vectors of equal length")
        if self.count <= 0:
            raise ValueError("count must be positive")
        if np.any(variance < 0):
            raise ValueError("variance entries must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def num_bins(self) -> int:
        return int(self.mean.shape[0])
