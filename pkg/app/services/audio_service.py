"""
WAV reading/writing and band-limited resampling
"""
import io
import math
import struct
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np
import structlog
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

from app.exceptions import AudioFormatError, AudioParseError, ConfigurationError
from app.schemas.audio import AudioBuffer
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

PCM16_SCALE = 32768.0

# Resampler: Kaiser-windowed sinc, 32 taps per polyphase branch
KAISER_BETA = 8.0
TAPS_PER_PHASE = 32


def read_wav(path: PathLike) -> AudioBuffer:
    """
    Read a RIFF/WAVE file as mono float audio

    Accepts 16-bit PCM and 32-bit IEEE float with one or two channels.
    Stereo is averaged to mono; 16-bit samples are scaled by 1/32768.
    """
    data = Path(path).read_bytes()
    return parse_wav_bytes(data, source=str(path))


def parse_wav_bytes(data: bytes, source: str = "<bytes>") -> AudioBuffer:
    """Parse an in-memory RIFF/WAVE image"""
    if len(data) < 12:
        raise AudioParseError(f"{source}: file too short for RIFF header", offset=len(data))
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise AudioParseError(f"{source}: not a RIFF/WAVE file", offset=0)

    fmt = None
    offset = 12
    while offset < len(data):
        if offset + 8 > len(data):
            raise AudioParseError(f"{source}: truncated chunk header", offset=offset)
        chunk_id, chunk_size = struct.unpack_from("<4sI", data, offset)
        body = offset + 8
        end = body + chunk_size

        if chunk_id == b"fmt ":
            if chunk_size < 16 or end > len(data):
                raise AudioParseError(f"{source}: truncated fmt chunk", offset=body)
            fmt = _parse_fmt(data, body, chunk_size, source)
        elif chunk_id == b"data":
            if fmt is None:
                raise AudioParseError(f"{source}: data chunk before fmt chunk", offset=offset)
            if end > len(data):
                raise AudioParseError(
                    f"{source}: data chunk declares {chunk_size} bytes, {len(data) - body} present",
                    offset=len(data),
                )
            return _decode_samples(data[body:end], fmt, body, source)

        offset = end + (chunk_size & 1)

    if fmt is None:
        raise AudioParseError(f"{source}: missing fmt chunk", offset=offset)
    raise AudioParseError(f"{source}: missing data chunk", offset=offset)


def _parse_fmt(data: bytes, body: int, size: int, source: str) -> dict:
    codec, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
    if codec == WAVE_FORMAT_EXTENSIBLE and size >= 40:
        # SubFormat GUID starts at byte 24 of the extensible fmt body
        codec = struct.unpack_from("<H", data, body + 24)[0]

    supported = (codec == WAVE_FORMAT_PCM and bits == 16) or (
        codec == WAVE_FORMAT_IEEE_FLOAT and bits == 32
    )
    if not supported:
        raise AudioFormatError(
            f"{source}: unsupported encoding (codec tag {codec}, {bits} bits); "
            "expected 16-bit PCM (tag 1) or 32-bit float (tag 3)",
            codec_tag=codec,
        )
    if channels not in (1, 2):
        raise AudioFormatError(f"{source}: {channels} channels, expected 1 or 2", codec_tag=codec)
    if rate <= 0:
        raise AudioParseError(f"{source}: sample rate must be positive", offset=body + 4)
    return {"codec": codec, "channels": channels, "rate": rate, "bits": bits,
            "block_align": block_align or channels * bits // 8}


def _decode_samples(payload: bytes, fmt: dict, body: int, source: str) -> AudioBuffer:
    block = fmt["channels"] * fmt["bits"] // 8
    if len(payload) % block:
        raise AudioParseError(
            f"{source}: data length {len(payload)} is not a multiple of frame size {block}",
            offset=body + len(payload) - len(payload) % block,
        )
    if fmt["codec"] == WAVE_FORMAT_PCM:
        samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / PCM16_SCALE
    else:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)

    if fmt["channels"] == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioBuffer(samples=samples, sample_rate=fmt["rate"])


def write_wav(buffer: AudioBuffer, path: PathLike) -> None:
    """Write 16-bit PCM, hard-clipping to [-1, 1]"""
    if len(buffer) == 0:
        raise ConfigurationError("cannot write an empty audio buffer")
    atomic_write_bytes(path, wav_bytes(buffer))


def wav_bytes(buffer: AudioBuffer) -> bytes:
    """16-bit PCM WAV image of a buffer"""
    clipped = np.clip(buffer.samples, -1.0, 1.0)
    pcm = np.clip(np.rint(clipped * PCM16_SCALE), -32768, 32767).astype("<i2")
    out = io.BytesIO()
    wavfile.write(out, buffer.sample_rate, pcm)
    return out.getvalue()


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """
    Band-limited resampling to ``target_rate`` Hz

    Output length is round(len * target_rate / source_rate).
    """
    if target_rate <= 0:
        raise ConfigurationError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buffer.sample_rate:
        return buffer.with_samples(buffer.samples.copy())
    samples = resample_by_ratio(buffer.samples, Fraction(target_rate, buffer.sample_rate))
    return AudioBuffer(samples=samples, sample_rate=target_rate)


def resample_by_ratio(samples: np.ndarray, ratio: Fraction) -> np.ndarray:
    """
    Resample by the rational factor ``ratio`` = output rate / input rate

    Windowed-sinc polyphase interpolation (scipy ``resample_poly``) with a
    Kaiser window, cutoff at the lower of the two Nyquist frequencies.
    """
    if ratio <= 0:
        raise ConfigurationError(f"resampling ratio must be positive, got {ratio}")
    up, down = ratio.numerator, ratio.denominator
    n_out = int(math.floor(len(samples) * up / down + 0.5))
    if up == down or len(samples) == 0:
        return np.array(samples, dtype=np.float64, copy=True)[:n_out]

    max_rate = max(up, down)
    half_len = TAPS_PER_PHASE // 2 * max_rate
    taps = firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    out = resample_poly(np.asarray(samples, dtype=np.float64), up, down, window=taps)
    if len(out) < n_out:
        out = np.concatenate([out, np.zeros(n_out - len(out))])
    return out[:n_out]


def load_audio(path: PathLike, sample_rate: int) -> AudioBuffer:
    """read_wav, resampled to ``sample_rate`` when the file uses another rate"""
    buffer = read_wav(path)
    if buffer.sample_rate != sample_rate:
        logger.debug("audio_resampled", path=str(path), source_rate=buffer.sample_rate, target_rate=sample_rate)
        buffer = resample(buffer, sample_rate)
    return buffer
