"""
Synthetic tone corpus for desk-scale training runs

Character k of the alphabet is a 120 ms pure tone at 400 * 2^(k/4) Hz;
characters are separated (and the utterance framed) by 40 ms of silence.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Set, Tuple, Union

import numpy as np
import structlog
from scipy.signal import windows
from tqdm import tqdm

from app.config import settings
from app.exceptions import ConfigurationError
from app.rng import derive_rng
from app.schemas.audio import AudioBuffer
from app.schemas.ctc import Alphabet
from app.schemas.manifest import ManifestEntry
from app.services.audio_service import write_wav
from app.services.manifest_service import write_manifest
from app.services.storage import atomic_write_text

logger = structlog.get_logger(__name__)

TONE_MS = 120.0
GAP_MS = 40.0
BASE_HZ = 400.0
AMPLITUDE = 0.5
RAMP_MS = 5.0
MIN_LENGTH = 3
MAX_LENGTH = 8
MAX_ALPHABET = 8
SYMBOLS = "abcdefgh"


@dataclass
class ToyCorpus:
    """Written corpus: alphabet plus train and validation manifests"""
    alphabet: Alphabet
    train: List[ManifestEntry]
    val: List[ManifestEntry]
    train_manifest: Path
    val_manifest: Path
    alphabet_path: Path


def tone_frequency(index: int) -> float:
    return BASE_HZ * 2.0 ** (index / 4.0)


def synthesize(text: str, alphabet: Alphabet, sample_rate: int) -> AudioBuffer:
    """Tone sequence for a transcript over the toy alphabet"""
    tone_len = int(round(TONE_MS * sample_rate / 1000.0))
    gap = np.zeros(int(round(GAP_MS * sample_rate / 1000.0)))
    ramp_len = int(round(RAMP_MS * sample_rate / 1000.0))
    ramp = windows.hann(2 * ramp_len + 1)[:ramp_len]
    envelope = np.ones(tone_len)
    envelope[:ramp_len] = ramp
    envelope[-ramp_len:] = ramp[::-1]
    t = np.arange(tone_len) / sample_rate

    pieces = [gap]
    for label in alphabet.encode(text):
        pieces.append(AMPLITUDE * envelope * np.sin(2.0 * np.pi * tone_frequency(label - 1) * t))
        pieces.append(gap)
    return AudioBuffer(samples=np.concatenate(pieces), sample_rate=sample_rate)


def random_strings(
    count: int,
    alphabet: Alphabet,
    rng: np.random.Generator,
    exclude: Set[str] = frozenset(),
) -> List[str]:
    """Uniform random strings of length 3-8 that avoid ``exclude``"""
    strings = []
    attempts = 0
    while len(strings) < count:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise ConfigurationError(f"cannot draw {count} strings outside the {len(exclude)} excluded ones")
        length = int(rng.integers(MIN_LENGTH, MAX_LENGTH + 1))
        text = "".join(alphabet.symbols[i] for i in rng.integers(0, len(alphabet.symbols), size=length))
        if text not in exclude:
            strings.append(text)
    return strings


def toy_alphabet(alphabet_size: int) -> Alphabet:
    if not 1 <= alphabet_size <= MAX_ALPHABET:
        raise ConfigurationError(f"toy alphabet size must be between 1 and {MAX_ALPHABET}, got {alphabet_size}")
    return Alphabet(tuple(SYMBOLS[:alphabet_size]))


def generate_toy_corpus(
    out_dir: Union[str, Path],
    num_train: int,
    num_val: int,
    alphabet_size: int = 5,
    seed: int = 0,
    sample_rate: Optional[int] = None,
    show_progress: bool = False,
) -> ToyCorpus:
    """
    Write WAVs under ``out_dir/wav`` plus train.jsonl, val.jsonl and
    alphabet.txt; validation strings never occur in the training split
    """
    if num_train < 0 or num_val < 0:
        raise ConfigurationError("utterance counts must be non-negative")
    sample_rate = sample_rate or settings.sample_rate
    alphabet = toy_alphabet(alphabet_size)
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)

    train_text = random_strings(num_train, alphabet, derive_rng(seed, "toy-corpus", 0))
    val_text = random_strings(num_val, alphabet, derive_rng(seed, "toy-corpus", 1), exclude=set(train_text))

    splits: List[Tuple[str, List[str]]] = [("train", train_text), ("val", val_text)]
    entries = {}
    for split, texts in splits:
        split_entries = []
        for i, text in enumerate(tqdm(texts, desc=f"toy-corpus {split}", disable=not show_progress)):
            buffer = synthesize(text, alphabet, sample_rate)
            relative = f"wav/{split}_{i:05d}.wav"
            write_wav(buffer, out_dir / relative)
            split_entries.append(ManifestEntry(audio_path=relative, transcript=text, duration_s=buffer.duration))
        write_manifest(split_entries, out_dir / f"{split}.jsonl")
        entries[split] = split_entries
    atomic_write_text(out_dir / "alphabet.txt", alphabet.to_text())

    logger.info("toy_corpus_written", out_dir=str(out_dir), train=num_train, val=num_val, alphabet_size=alphabet_size)
    return ToyCorpus(
        alphabet=alphabet,
        train=entries["train"],
        val=entries["val"],
        train_manifest=out_dir / "train.jsonl",
        val_manifest=out_dir / "val.jsonl",
        alphabet_path=out_dir / "alphabet.txt",
    )
