"""
Spectrogram extraction and the two-stage normalization

Pipeline order is fixed: log-power spectrogram, then per-utterance
normalization, then per-bin normalization with training-set statistics
(which are themselves computed on utterance-normalized spectrograms).
"""
import math
import struct
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import structlog
from scipy import fft
from scipy.signal import get_window

from app.exceptions import FeatureError
from app.schemas.audio import AudioBuffer
from app.schemas.features import FeatureStats, Spectrogram
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)

FRAME_MS = 20.0
HOP_MS = 10.0
LOG_FLOOR = 1e-10
FEATURE_EPS = 1e-8


def frame_geometry(sample_rate: int) -> tuple:
    """(window, hop, fft_size) in samples for a sample rate"""
    window = int(round(FRAME_MS * sample_rate / 1000.0))
    hop = int(round(HOP_MS * sample_rate / 1000.0))
    fft_size = 1 << (window - 1).bit_length()
    return window, hop, fft_size


def num_bins(sample_rate: int) -> int:
    return frame_geometry(sample_rate)[2] // 2 + 1


def spectrogram(buffer: AudioBuffer) -> Spectrogram:
    """
    Log-power spectrogram: 20 ms Hamming frames every 10 ms, real FFT at the
    next power of two, log(power + 1e-10)
    """
    window, hop, fft_size = frame_geometry(buffer.sample_rate)
    if len(buffer) < window:
        raise FeatureError(
            f"buffer has {len(buffer)} samples, at least {window} required for one frame"
        )
    frames = np.lib.stride_tricks.sliding_window_view(buffer.samples, window)[::hop]
    frames = frames * get_window("hamming", window)
    power = np.abs(fft.rfft(frames, n=fft_size, axis=1)) ** 2
    return Spectrogram(
        data=np.log(power + LOG_FLOOR),
        sample_rate=buffer.sample_rate,
        frame_ms=FRAME_MS,
        hop_ms=HOP_MS,
    )


def normalize_utterance(spec: Spectrogram) -> Spectrogram:
    """Zero mean, unit variance over all entries; constant input maps to zeros"""
    data = spec.data
    std = float(np.std(data))
    if data.size <= 1 or std == 0.0:
        return spec.with_data(np.zeros_like(data))
    return spec.with_data((data - data.mean()) / std)


def compute_stats(specs: Iterable[Spectrogram]) -> FeatureStats:
    """
    Per-bin mean and population variance over every frame of every input

    One pass over the stream; each spectrogram is reduced exactly and merged
    into the running totals with the pairwise (Chan et al.) update.
    """
    count = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None

    for spec in specs:
        data = spec.data
        n_b = data.shape[0]
        if n_b == 0:
            continue
        mean_b = data.mean(axis=0)
        m2_b = ((data - mean_b) ** 2).sum(axis=0)
        if mean is None:
            count, mean, m2 = n_b, mean_b, m2_b
            continue
        if mean_b.shape != mean.shape:
            raise FeatureError(
                f"spectrogram with {mean_b.shape[0]} bins in a stream of {mean.shape[0]}-bin spectrograms"
            )
        total = count + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta ** 2 * (count * n_b / total)
        count = total

    if mean is None:
        raise FeatureError("cannot compute statistics over an empty stream")
    return FeatureStats(mean=mean, variance=np.maximum(m2 / count, 0.0), count=count)


def merge_stats(a: FeatureStats, b: FeatureStats) -> FeatureStats:
    """Exact merge of two partial statistics"""
    if a.num_bins != b.num_bins:
        raise FeatureError(f"cannot merge stats with {a.num_bins} and {b.num_bins} bins")
    total = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / total)
    m2 = a.variance * a.count + b.variance * b.count + delta ** 2 * (a.count * b.count / total)
    return FeatureStats(mean=mean, variance=np.maximum(m2 / total, 0.0), count=total)


def normalize_features(spec: Spectrogram, stats: FeatureStats) -> Spectrogram:
    """(x - mean_j) / sqrt(variance_j + 1e-8) per bin j"""
    if spec.num_bins != stats.num_bins:
        raise FeatureError(
            f"spectrogram has {spec.num_bins} bins but statistics have {stats.num_bins}"
        )
    return spec.with_data((spec.data - stats.mean) / np.sqrt(stats.variance + FEATURE_EPS))


def extract_features(buffer: AudioBuffer, stats: Optional[FeatureStats] = None) -> Spectrogram:
    """Spectrogram followed by both normalization stages (the second only with stats)"""
    spec = normalize_utterance(spectrogram(buffer))
    if stats is not None:
        spec = normalize_features(spec, stats)
    return spec


def stats_to_bytes(stats: FeatureStats) -> bytes:
    """Little-endian: u32 bins, then means, then variances as f64"""
    return (
        struct.pack("<I", stats.num_bins)
        + stats.mean.astype("<f8").tobytes()
        + stats.variance.astype("<f8").tobytes()
    )


def stats_from_bytes(data: bytes) -> FeatureStats:
    """Inverse of stats_to_bytes; the frame count is not stored and reads back as 1"""
    if len(data) < 4:
        raise FeatureError("statistics file too short for header")
    (bins,) = struct.unpack_from("<I", data, 0)
    expected = 4 + 16 * bins
    if len(data) != expected:
        raise FeatureError(f"statistics file has {len(data)} bytes, expected {expected} for {bins} bins")
    mean = np.frombuffer(data, dtype="<f8", count=bins, offset=4).astype(np.float64)
    variance = np.frombuffer(data, dtype="<f8", count=bins, offset=4 + 8 * bins).astype(np.float64)
    return FeatureStats(mean=mean, variance=variance, count=1)


def save_stats(stats: FeatureStats, path: Union[str, Path]) -> None:
    atomic_write_bytes(path, stats_to_bytes(stats))


def load_stats(path: Union[str, Path]) -> FeatureStats:
    return stats_from_bytes(Path(path).read_bytes())


def frames_for_length(num_samples: int, sample_rate: int) -> int:
    """Frame count law: floor((len - win) / hop) + 1, zero below one window"""
    window, hop, _ = frame_geometry(sample_rate)
    if num_samples < window:
        return 0
    return int(math.floor((num_samples - window) / hop)) + 1
