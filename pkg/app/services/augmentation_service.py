"""
Raw-audio augmentation: tempo, pitch, gain, shift and white noise

Tempo uses WSOLA so pitch is preserved; pitch shift is resampling followed by
tempo compensation so duration is preserved. The two are independent, which
plain speed perturbation cannot offer.
"""
import math
from fractions import Fraction
from typing import Optional

import numpy as np
import structlog
from scipy.signal import correlate
from scipy.signal.windows import hann

from app.exceptions import ConfigurationError, SignalError
from app.rng import make_rng
from app.schemas.audio import AudioBuffer
from app.schemas.augmentation import AugmentationPolicy, AugmentationSpec
from app.services.audio_service import resample_by_ratio

logger = structlog.get_logger(__name__)

# WSOLA geometry in milliseconds
WSOLA_SEGMENT_MS = 25.0
WSOLA_SEEK_MS = 10.0
WSOLA_OVERLAP_MS = 5.0

MAX_TEMPO_FACTOR = 4.0
MAX_PITCH_CENTS = 1200.0
RATIO_MAX_DENOMINATOR = 1000


def sample_spec(policy: AugmentationPolicy, rng: np.random.Generator) -> AugmentationSpec:
    """
    Draw one spec from a policy

    All five parameters are always drawn in a fixed order, so toggling one
    perturbation does not change the values the others receive.
    """
    tempo_factor = rng.uniform(*policy.tempo_range)
    pitch_cents = rng.uniform(*policy.pitch_range_cents)
    gain_db = rng.uniform(*policy.gain_range_db)
    shift_ms = rng.uniform(*policy.shift_range_ms)
    snr_db = rng.uniform(*policy.snr_range_db)
    seed = int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64, endpoint=True))

    return AugmentationSpec(
        tempo_factor=float(tempo_factor) if policy.enable_tempo else 1.0,
        pitch_cents=float(pitch_cents) if policy.enable_pitch else 0.0,
        gain_db=float(gain_db) if policy.enable_gain else 0.0,
        shift_ms=float(shift_ms) if policy.enable_shift else 0.0,
        snr_db=float(snr_db) if policy.enable_noise else None,
        seed=seed,
    )


def tempo(buffer: AudioBuffer, factor: float) -> AudioBuffer:
    """
    Time-stretch by WSOLA: output duration = input duration / factor

    Segments of 25 ms are copied from the input at the nominal analysis
    position, shifted within a 10 ms seek window to the offset whose head
    best matches the natural continuation of the previous segment, and joined
    with a 5 ms Hann cross-fade.
    """
    if not 0.0 < factor <= MAX_TEMPO_FACTOR:
        raise ConfigurationError(f"tempo factor must lie in (0, {MAX_TEMPO_FACTOR}], got {factor}")
    if factor == 1.0:
        return buffer.with_samples(buffer.samples.copy())

    rate = buffer.sample_rate
    segment = max(2, int(round(WSOLA_SEGMENT_MS * rate / 1000)))
    overlap = max(1, int(round(WSOLA_OVERLAP_MS * rate / 1000)))
    tolerance = max(1, int(round(WSOLA_SEEK_MS * rate / 1000)) // 2)
    hop = segment - overlap

    x = buffer.samples
    n = len(x)
    if n < segment:
        return buffer.with_samples(x.copy())

    target_len = int(math.floor(n / factor + 0.5))
    # Zero guard bands so every search window is in range
    padded = np.concatenate([np.zeros(tolerance), x, np.zeros(segment + 2 * tolerance + hop)])
    limit = n + tolerance + hop

    fade_in = hann(2 * overlap, sym=False)[:overlap]
    fade_out = 1.0 - fade_in

    out = np.zeros(target_len + segment)
    out[:segment] = x[:segment]
    previous = 0
    write_pos = hop
    k = 1
    while write_pos < target_len:
        nominal = min(int(round(k * hop * factor)), limit)
        natural = previous + hop
        reference = padded[natural + tolerance:natural + tolerance + overlap]

        search = padded[nominal:nominal + 2 * tolerance + overlap]
        scores = correlate(search, reference, mode="valid")
        energy = np.convolve(search ** 2, np.ones(overlap), mode="valid")
        scores = scores / np.sqrt(energy + 1e-12)
        best = max(nominal - tolerance + int(np.argmax(scores)), -tolerance)

        chunk = padded[best + tolerance:best + tolerance + segment]
        out[write_pos:write_pos + overlap] = (
            out[write_pos:write_pos + overlap] * fade_out + chunk[:overlap] * fade_in
        )
        out[write_pos + overlap:write_pos + segment] = chunk[overlap:]

        previous = best
        write_pos += hop
        k += 1

    return buffer.with_samples(out[:target_len])


def pitch(buffer: AudioBuffer, cents: float) -> AudioBuffer:
    """
    Shift pitch by ``cents`` with duration preserved

    Resample to rate/r with r = 2^(cents/1200), reinterpret at the original
    rate (frequencies scale by r, duration by 1/r), then stretch back with
    WSOLA and fix the length to the input length.
    """
    if abs(cents) > MAX_PITCH_CENTS:
        raise ConfigurationError(f"|cents| must not exceed {MAX_PITCH_CENTS}, got {cents}")
    if cents == 0:
        return buffer.with_samples(buffer.samples.copy())

    ratio = 2.0 ** (cents / 1200.0)
    shifted = resample_by_ratio(
        buffer.samples, Fraction(1.0 / ratio).limit_denominator(RATIO_MAX_DENOMINATOR)
    )
    if len(shifted) == 0:
        return buffer.with_samples(buffer.samples.copy())
    stretched = tempo(buffer.with_samples(shifted), 1.0 / ratio).samples
    return buffer.with_samples(_fit_length(stretched, len(buffer)))


def speed(buffer: AudioBuffer, factor: float) -> AudioBuffer:
    """
    Speed perturbation: tempo and pitch change together by ``factor``

    Kept for the speed-perturbation comparison baseline; not sampled by
    the augmentation policy.
    """
    if factor <= 0:
        raise ConfigurationError(f"speed factor must be positive, got {factor}")
    if factor == 1.0:
        return buffer.with_samples(buffer.samples.copy())
    samples = resample_by_ratio(
        buffer.samples, Fraction(1.0 / factor).limit_denominator(RATIO_MAX_DENOMINATOR)
    )
    return buffer.with_samples(samples)


def gain(buffer: AudioBuffer, db: float) -> AudioBuffer:
    """Scale by 10^(db/20); no clipping"""
    if db == 0:
        return buffer.with_samples(buffer.samples.copy())
    return buffer.with_samples(buffer.samples * (10.0 ** (db / 20.0)))


def shift(buffer: AudioBuffer, ms: float) -> AudioBuffer:
    """Prepend round(ms * rate / 1000) zero samples"""
    if ms < 0:
        raise ConfigurationError(f"shift must be non-negative, got {ms} ms")
    pad = int(math.floor(ms * buffer.sample_rate / 1000.0 + 0.5))
    if pad == 0:
        return buffer.with_samples(buffer.samples.copy())
    return buffer.with_samples(np.concatenate([np.zeros(pad), buffer.samples]))


def add_white_noise(
    buffer: AudioBuffer,
    snr_db: Optional[float],
    rng: np.random.Generator,
) -> AudioBuffer:
    """
    Add Gaussian noise at exactly ``snr_db``

    The generated noise is rescaled by its own realized power, so the
    measured SNR equals the request up to rounding.
    """
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return buffer.with_samples(buffer.samples.copy())

    x = buffer.samples
    signal_power = float(np.mean(x ** 2)) if len(x) else 0.0
    if signal_power == 0.0:
        raise SignalError("cannot add noise at a target SNR to a silent buffer")

    noise = rng.standard_normal(len(x))
    noise_power = float(np.mean(noise ** 2))
    target_power = signal_power / (10.0 ** (snr_db / 10.0))
    noise *= math.sqrt(target_power / noise_power)
    return buffer.with_samples(x + noise)


def apply(buffer: AudioBuffer, spec: AugmentationSpec) -> AudioBuffer:
    """Apply tempo -> pitch -> gain -> shift -> noise, deterministically from the spec"""
    out = tempo(buffer, spec.tempo_factor)
    out = pitch(out, spec.pitch_cents)
    out = gain(out, spec.gain_db)
    out = shift(out, spec.shift_ms)
    if spec.snr_db is not None:
        out = add_white_noise(out, spec.snr_db, make_rng(spec.seed))
    return out


def _fit_length(samples: np.ndarray, length: int) -> np.ndarray:
    if len(samples) >= length:
        return samples[:length]
    return np.concatenate([samples, np.zeros(length - len(samples))])
