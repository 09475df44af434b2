"""
eval: CER and WER of a trained model on a manifest
"""
from pathlib import Path
from typing import Optional

import click

from app.cli.decode import alpha_option, beam_option, beta_option, decode_config_from_options, lm_option
from app.cli.options import echo_json, existing_file, log_level_option, output_path, threads_option, write_json
from app.models.checkpoint import load_checkpoint
from app.services.evaluation_service import evaluate
from app.services.feature_service import load_stats
from app.services.manifest_service import parse_manifest
from app.services.trainer_service import STATS_NAME


@click.command("eval")
@click.option("--model", "model_path", type=existing_file, required=True, help="Checkpoint written by train.")
@click.option("--manifest", "manifest_path", type=existing_file, required=True, help="Manifest to score.")
@click.option("--stats", "stats_path", type=existing_file, default=None,
              help="Feature statistics (default: feature_stats.bin beside the checkpoint).")
@lm_option
@beam_option
@alpha_option
@beta_option
@click.option("--details/--no-details", default=False, help="Include per-utterance hypotheses in the output.")
@click.option("--out", "out_path", type=output_path, default=None, help="Also write the report to this file.")
@threads_option
@log_level_option
def eval_command(
    model_path: Path,
    manifest_path: Path,
    stats_path: Optional[Path],
    lm: Optional[Path],
    beam: Optional[int],
    alpha: Optional[float],
    beta: Optional[float],
    details: bool,
    out_path: Optional[Path],
    threads: Optional[int],
):
    """Decode a manifest and print corpus CER/WER as JSON on stdout."""
    checkpoint = load_checkpoint(model_path)
    if stats_path is None and (model_path.parent / STATS_NAME).exists():
        stats_path = model_path.parent / STATS_NAME
    stats = load_stats(stats_path) if stats_path is not None else None
    config = decode_config_from_options(lm, beam, alpha, beta, checkpoint.alphabet)

    entries = parse_manifest(manifest_path)
    result = evaluate(checkpoint, entries, manifest_path, config, stats=stats, threads=threads)

    report = result.model_dump(mode="json", exclude=None if details else {"hypotheses"})
    if out_path is not None:
        write_json(out_path, report)
    echo_json(report)
