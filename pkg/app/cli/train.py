"""
train: fit the acoustic model from manifests
"""
from pathlib import Path
from typing import Optional

import click
import structlog

from app.cli.options import existing_file, load_alphabet, log_level_option, output_path, read_json, threads_option, write_json
from app.config import settings
from app.exceptions import ConfigurationError
from app.schemas.model import ModelConfig
from app.schemas.training import REGULARIZATION_PRESETS, TrainConfig
from app.services.feature_service import load_stats, num_bins
from app.services.manifest_service import parse_manifest
from app.services.trainer_service import train

logger = structlog.get_logger(__name__)

CONFIG_NAME = "train_config.json"
MODEL_CONFIG_NAME = "model_config.json"


def resolve_train_config(config_path: Optional[Path], preset: Optional[str], overrides: dict) -> TrainConfig:
    values = read_json(config_path) if config_path is not None else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    if preset is not None:
        return TrainConfig.from_preset(preset, **values)
    return TrainConfig.model_validate(values)


def resolve_model_config(model_config_path: Optional[Path], alphabet_size: int) -> ModelConfig:
    if model_config_path is None:
        return ModelConfig.desk_scale(alphabet_size=alphabet_size, input_bins=num_bins(settings.sample_rate))
    values = read_json(model_config_path)
    values.setdefault("alphabet_size", alphabet_size)
    values.setdefault("input_bins", num_bins(settings.sample_rate))
    config = ModelConfig.model_validate(values)
    if config.alphabet_size != alphabet_size:
        raise ConfigurationError(
            f"{model_config_path}: alphabet_size {config.alphabet_size} does not match the "
            f"{alphabet_size}-symbol alphabet"
        )
    return config


@click.command("train")
@click.option("--config", "config_path", type=existing_file, default=None,
              help="TrainConfig JSON; omitted fields take their defaults.")
@click.option("--model-config", "model_config_path", type=existing_file, default=None,
              help="ModelConfig JSON (default: desk-scale layout).")
@click.option("--preset", type=click.Choice(sorted(REGULARIZATION_PRESETS)), default=None,
              help="Regularization preset; fields given in --config take precedence.")
@click.option("--manifest", "manifest_path", type=existing_file, required=True, help="Training manifest.")
@click.option("--val", "val_path", type=existing_file, required=True, help="Validation manifest.")
@click.option("--alphabet", "alphabet_path", type=existing_file, default=None,
              help="One symbol per line (default: alphabet.txt beside the manifest, else SPEECHREG_DEFAULT_ALPHABET).")
@click.option("--stats", "stats_path", type=existing_file, default=None,
              help="Feature statistics (default: computed from the training audio).")
@click.option("--out", "out_dir", type=output_path, required=True,
              help="Directory for best.ckpt, train_log.csv and feature_stats.bin.")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Overrides the config seed.")
@click.option("--max-epochs", type=click.IntRange(min=1), default=None, help="Overrides the config max_epochs.")
@click.option("--progress/--no-progress", default=False, help="Show per-epoch progress bars.")
@threads_option
@log_level_option
def train_command(
    config_path: Optional[Path],
    model_config_path: Optional[Path],
    preset: Optional[str],
    manifest_path: Path,
    val_path: Path,
    alphabet_path: Optional[Path],
    stats_path: Optional[Path],
    out_dir: Path,
    seed: Optional[int],
    max_epochs: Optional[int],
    progress: bool,
    threads: Optional[int],
):
    """Train with Nesterov SGD, plateau halving and the configured regularization."""
    if alphabet_path is None and (manifest_path.parent / "alphabet.txt").exists():
        alphabet_path = manifest_path.parent / "alphabet.txt"
    alphabet = load_alphabet(alphabet_path)
    train_config = resolve_train_config(config_path, preset, {"seed": seed, "max_epochs": max_epochs})
    model_config = resolve_model_config(model_config_path, len(alphabet.symbols))

    train_entries = parse_manifest(manifest_path, alphabet)
    val_entries = parse_manifest(val_path, alphabet)
    stats = load_stats(stats_path) if stats_path is not None else None

    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / CONFIG_NAME, train_config.model_dump(mode="json"))
    write_json(out_dir / MODEL_CONFIG_NAME, model_config.model_dump(mode="json"))
    result = train(
        model_config, train_config, train_entries, val_entries, manifest_path, val_path, alphabet,
        out_dir=out_dir, stats=stats, threads=threads, show_progress=progress,
    )
    best = result.log.best_record
    logger.info("train_command_completed", out_dir=str(out_dir), best_epoch=result.best_epoch,
                best_val_loss=best.val_loss if best else None)
