"""
featurize: normalized spectrograms for every utterance of a manifest
"""
import io
from pathlib import Path
from typing import Optional

import click
import numpy as np
import orjson
import structlog

from app.cli.options import existing_file, log_level_option, output_path, threads_option
from app.config import settings
from app.services.evaluation_service import load_features
from app.services.feature_service import compute_stats, load_stats, normalize_utterance, save_stats, spectrogram
from app.services.audio_service import load_audio
from app.services.manifest_service import parse_manifest, resolve_audio_path
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)

INDEX_NAME = "index.jsonl"
STATS_NAME = "feature_stats.bin"


def feature_bytes(data: np.ndarray) -> bytes:
    out = io.BytesIO()
    np.save(out, np.ascontiguousarray(data, dtype="<f8"), allow_pickle=False)
    return out.getvalue()


@click.command("featurize")
@click.option("--manifest", "manifest_path", type=existing_file, required=True, help="Input JSON-lines manifest.")
@click.option("--out-dir", type=output_path, required=True, help="Directory for .npy features and index.jsonl.")
@click.option("--stats", "stats_path", type=existing_file, default=None,
              help="Per-bin statistics to normalize with; computed from this manifest when omitted.")
@threads_option
@log_level_option
def featurize_command(manifest_path: Path, out_dir: Path, stats_path: Optional[Path], threads: Optional[int]):
    """Compute spectrogram features with both normalization stages."""
    entries = parse_manifest(manifest_path)
    out_dir.mkdir(parents=True, exist_ok=True)

    if stats_path is not None:
        stats = load_stats(stats_path)
    else:
        stats = compute_stats(
            normalize_utterance(spectrogram(load_audio(resolve_audio_path(e, manifest_path), settings.sample_rate)))
            for e in entries
        )
        save_stats(stats, out_dir / STATS_NAME)

    features = load_features(entries, manifest_path, stats, threads)
    lines = []
    for i, (entry, spec) in enumerate(zip(entries, features)):
        name = f"{i:05d}.npy"
        atomic_write_bytes(out_dir / name, feature_bytes(spec.data))
        lines.append(orjson.dumps({
            "audio_path": entry.audio_path,
            "features": name,
            "frames": spec.num_frames,
            "transcript": entry.transcript,
        }))
    atomic_write_bytes(out_dir / INDEX_NAME, b"".join(line + b"\n" for line in lines))
    logger.info("featurize_completed", utterances=len(entries), out_dir=str(out_dir))
