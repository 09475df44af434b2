"""
Character and word error rates
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Hashable, List, Optional, Sequence, Union

import numpy as np
import structlog

from app.config import settings
from app.exceptions import ConfigurationError
from app.models.checkpoint import Checkpoint
from app.models.speech_model import predict_lattices
from app.schemas.ctc import Alphabet
from app.schemas.decoding import DecodeConfig
from app.schemas.evaluation import EvaluationResult, UtteranceHypothesis
from app.schemas.features import FeatureStats
from app.schemas.manifest import ManifestEntry
from app.services import decoder_service
from app.services.audio_service import load_audio
from app.services.feature_service import extract_features
from app.services.manifest_service import resolve_audio_path

logger = structlog.get_logger(__name__)


def edit_distance(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]) -> int:
    """Levenshtein distance with unit substitution, insertion and deletion costs"""
    ref = list(reference)
    hyp = list(hypothesis)
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    previous = np.arange(len(hyp) + 1)
    for i, r in enumerate(ref, start=1):
        current = np.empty_like(previous)
        current[0] = i
        substitution = previous[:-1] + np.array([h != r for h in hyp], dtype=previous.dtype)
        deletion = previous[1:] + 1
        best = np.minimum(substitution, deletion)
        # insertions chain left to right, so they need a sequential pass
        for j in range(1, len(hyp) + 1):
            current[j] = min(best[j - 1], current[j - 1] + 1)
        previous = current
    return int(previous[-1])


def character_error_rate(reference: str, hypothesis: str) -> float:
    if not reference:
        raise ConfigurationError("character error rate is undefined for an empty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def word_error_rate(reference: str, hypothesis: str) -> float:
    words = reference.split()
    if not words:
        raise ConfigurationError("word error rate is undefined for an empty reference")
    return edit_distance(words, hypothesis.split()) / len(words)


def score_transcripts(
    references: Sequence[str],
    hypotheses: Sequence[str],
    audio_paths: Optional[Sequence[str]] = None,
) -> EvaluationResult:
    """
    Corpus CER and WER as total edits over total reference tokens

    Utterances with an empty reference are excluded and counted as skipped.
    """
    if len(references) != len(hypotheses):
        raise ConfigurationError(f"{len(references)} references but {len(hypotheses)} hypotheses")
    audio_paths = audio_paths or [""] * len(references)

    char_edits = word_edits = ref_chars = ref_words = skipped = 0
    scored: List[UtteranceHypothesis] = []
    for path, ref, hyp in zip(audio_paths, references, hypotheses):
        if not ref.strip():
            skipped += 1
            continue
        c = edit_distance(ref, hyp)
        w = edit_distance(ref.split(), hyp.split())
        char_edits += c
        word_edits += w
        ref_chars += len(ref)
        ref_words += len(ref.split())
        scored.append(UtteranceHypothesis(
            audio_path=path, reference=ref, hypothesis=hyp, char_edits=c, word_edits=w,
        ))

    return EvaluationResult(
        cer=char_edits / ref_chars if ref_chars else 0.0,
        wer=word_edits / ref_words if ref_words else 0.0,
        utterances=len(scored),
        skipped=skipped,
        char_edits=char_edits,
        reference_chars=ref_chars,
        word_edits=word_edits,
        reference_words=ref_words,
        hypotheses=scored,
    )


def load_features(
    entries: Sequence[ManifestEntry],
    manifest_path: Union[str, Path],
    stats: Optional[FeatureStats],
    threads: Optional[int] = None,
):
    """Normalized features for every manifest entry, in manifest order"""
    def featurize(entry: ManifestEntry):
        buffer = load_audio(resolve_audio_path(entry, manifest_path), settings.sample_rate)
        return extract_features(buffer, stats)

    threads = threads or settings.threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(featurize, entries))


def evaluate(
    checkpoint: Checkpoint,
    entries: Sequence[ManifestEntry],
    manifest_path: Union[str, Path],
    decode_config: DecodeConfig,
    stats: Optional[FeatureStats] = None,
    batch_size: int = 16,
    threads: Optional[int] = None,
) -> EvaluationResult:
    """Decode every manifest utterance with a trained model and score it"""
    if checkpoint.alphabet is None:
        raise ConfigurationError("checkpoint carries no alphabet; cannot map labels to text")
    alphabet = Alphabet(checkpoint.alphabet)
    features = load_features(entries, manifest_path, stats, threads)
    lattices = predict_lattices(features, checkpoint.params, checkpoint.state, checkpoint.config, batch_size)
    config = decode_config.model_copy(update={"symbols": alphabet.symbols})
    ranked = decoder_service.decode_batch(lattices, config, threads)
    hypotheses = [alphabet.decode(results[0].labels) if results else "" for results in ranked]

    result = score_transcripts(
        [e.transcript for e in entries], hypotheses, [e.audio_path for e in entries],
    )
    logger.info(
        "evaluation_completed", cer=result.cer, wer=result.wer,
        utterances=result.utterances, skipped=result.skipped,
    )
    return result
