"""
decode: beam-search transcripts for featurized utterances
"""
from pathlib import Path
from typing import List, Optional

import click
import numpy as np
import orjson
import structlog

from app.cli.featurize import INDEX_NAME
from app.cli.options import existing_dir, existing_file, log_level_option, output_path, threads_option
from app.config import settings
from app.exceptions import CheckpointError, ConfigurationError, FeatureError
from app.models.checkpoint import load_checkpoint
from app.models.speech_model import predict_lattices
from app.schemas.ctc import Alphabet
from app.schemas.decoding import DecodeConfig
from app.services.decoder_service import decode_batch
from app.services.lm_service import parse_arpa
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)


def read_feature_index(features_dir: Path) -> List[dict]:
    index_path = features_dir / INDEX_NAME
    if not index_path.exists():
        raise FeatureError(f"{features_dir}: no {INDEX_NAME}; run featurize first")
    records = []
    for line_number, line in enumerate(index_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(orjson.loads(line))
        except orjson.JSONDecodeError as e:
            raise FeatureError(f"{index_path}:{line_number}: malformed JSON ({e})") from None
    return records


def load_feature_file(path: Path) -> np.ndarray:
    try:
        data = np.load(path, allow_pickle=False)
    except ValueError as e:
        raise FeatureError(f"{path}: {e}") from None
    if data.ndim != 2:
        raise FeatureError(f"{path}: expected a frames x bins matrix, got shape {data.shape}")
    return data


def decode_config_from_options(lm: Optional[Path], beam: Optional[int], alpha: Optional[float],
                               beta: Optional[float], symbols) -> DecodeConfig:
    return DecodeConfig(
        beam_width=beam if beam is not None else settings.decode_beam_width,
        lm_weight=alpha if alpha is not None else settings.decode_alpha,
        insertion_bonus=beta if beta is not None else settings.decode_beta,
        model=parse_arpa(lm, settings.lm_oov_log10) if lm is not None else None,
        symbols=symbols,
    )


lm_option = click.option("--lm", type=existing_file, default=None, help="ARPA language model for shallow fusion.")
beam_option = click.option("--beam", type=click.IntRange(min=1), default=None,
                           help="Beam width (default: SPEECHREG_DECODE_BEAM_WIDTH).")
alpha_option = click.option("--alpha", type=click.FloatRange(min=0.0), default=None,
                            help="LM weight (default: SPEECHREG_DECODE_ALPHA).")
beta_option = click.option("--beta", type=float, default=None,
                           help="Per-character insertion bonus (default: SPEECHREG_DECODE_BETA).")


@click.command("decode")
@click.option("--features", "features_dir", type=existing_dir, required=True,
              help="Directory written by featurize.")
@click.option("--model", "model_path", type=existing_file, required=True, help="Checkpoint written by train.")
@lm_option
@beam_option
@alpha_option
@beta_option
@click.option("--nbest", type=click.IntRange(min=1), default=1, show_default=True,
              help="Hypotheses kept per utterance.")
@click.option("--out", "out_path", type=output_path, required=True, help="Output JSON-lines file.")
@threads_option
@log_level_option
def decode_command(
    features_dir: Path,
    model_path: Path,
    lm: Optional[Path],
    beam: Optional[int],
    alpha: Optional[float],
    beta: Optional[float],
    nbest: int,
    out_path: Path,
    threads: Optional[int],
):
    """Prefix beam search with optional n-gram fusion; one JSON line per utterance."""
    checkpoint = load_checkpoint(model_path)
    if checkpoint.alphabet is None:
        raise CheckpointError(f"{model_path}: checkpoint carries no alphabet")
    alphabet = Alphabet(checkpoint.alphabet)
    config = decode_config_from_options(lm, beam, alpha, beta, alphabet.symbols)

    records = read_feature_index(features_dir)
    features = [load_feature_file(features_dir / record["features"]) for record in records]
    for record, data in zip(records, features):
        if data.shape[1] != checkpoint.config.input_bins:
            raise ConfigurationError(
                f"{record['features']}: {data.shape[1]} bins, model expects {checkpoint.config.input_bins}"
            )
    lattices = predict_lattices(features, checkpoint.params, checkpoint.state, checkpoint.config)
    ranked = decode_batch(lattices, config, threads)

    lines = []
    for record, results in zip(records, ranked):
        lines.append(orjson.dumps({
            "audio_path": record.get("audio_path"),
            "features": record["features"],
            "hypotheses": [
                {
                    "text": alphabet.decode(r.labels),
                    "score": r.score,
                    "acoustic_logp": r.acoustic_logp,
                    "lm_score": r.lm_score,
                }
                for r in results[:nbest]
            ],
        }))
    atomic_write_bytes(out_path, b"".join(line + b"\n" for line in lines))
    logger.info("decode_completed", utterances=len(records), out=str(out_path), beam_width=config.beam_width)
