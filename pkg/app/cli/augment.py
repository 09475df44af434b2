"""
augment: write perturbed copies of every utterance in a manifest
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Tuple

import click
import structlog

from app.cli.options import existing_file, log_level_option, output_path, seed_option, threads_option
from app.config import settings
from app.exceptions import ConfigurationError
from app.rng import derive_rng
from app.schemas.augmentation import AugmentationPolicy
from app.schemas.manifest import ManifestEntry
from app.services import augmentation_service
from app.services.audio_service import read_wav, write_wav
from app.services.manifest_service import parse_manifest, resolve_audio_path, write_manifest

logger = structlog.get_logger(__name__)

MANIFEST_NAME = "manifest.jsonl"
PERTURBATIONS = ("tempo", "pitch", "gain", "shift", "noise")


class RangeType(click.ParamType):
    """A ``low,high`` pair of floats"""
    name = "low,high"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            low, high = (float(part) for part in value.split(","))
        except ValueError:
            self.fail(f"expected two comma-separated numbers, got {value!r}", param, ctx)
        return (low, high)


RANGE = RangeType()


def build_policy(disabled: Tuple[str, ...], ranges: dict) -> AugmentationPolicy:
    values = {f"enable_{name}": name not in disabled for name in PERTURBATIONS}
    values.update({key: value for key, value in ranges.items() if value is not None})
    try:
        return AugmentationPolicy(**values)
    except ValueError as e:
        raise ConfigurationError(str(e)) from None


@click.command("augment")
@click.option("--manifest", "manifest_path", type=existing_file, required=True, help="Input JSON-lines manifest.")
@click.option("--out-dir", type=output_path, required=True, help="Directory for augmented WAVs and manifest.")
@click.option("--copies", type=click.IntRange(min=0), default=1, show_default=True,
              help="Perturbed copies per utterance; the original is always kept.")
@click.option("--no-tempo", "disabled", flag_value="tempo", multiple=True, help="Disable tempo perturbation.")
@click.option("--no-pitch", "disabled", flag_value="pitch", multiple=True, help="Disable pitch perturbation.")
@click.option("--no-gain", "disabled", flag_value="gain", multiple=True, help="Disable gain perturbation.")
@click.option("--no-shift", "disabled", flag_value="shift", multiple=True, help="Disable time shift.")
@click.option("--no-noise", "disabled", flag_value="noise", multiple=True, help="Disable white noise.")
@click.option("--tempo-range", type=RANGE, default=None, help="Tempo factor range [default: 0.7,1.3].")
@click.option("--pitch-range", type=RANGE, default=None, help="Pitch range in cents [default: -500,500].")
@click.option("--gain-range", type=RANGE, default=None, help="Gain range in dB [default: -20,10].")
@click.option("--shift-range", type=RANGE, default=None, help="Shift range in ms [default: 0,10].")
@click.option("--snr-range", type=RANGE, default=None, help="Noise SNR range in dB [default: 10,15].")
@click.option("--speed", "speed_factors", type=click.FloatRange(min=0.0, min_open=True), multiple=True,
              help="Speed-perturbation factor (repeatable); writes one copy per factor instead of random copies.")
@seed_option
@threads_option
@log_level_option
def augment_command(
    manifest_path: Path,
    out_dir: Path,
    copies: int,
    disabled: Tuple[str, ...],
    tempo_range, pitch_range, gain_range, shift_range, snr_range,
    speed_factors: Tuple[float, ...],
    seed: int,
    threads: Optional[int],
):
    """Apply random tempo/pitch/gain/shift/noise perturbations to a corpus."""
    policy = build_policy(disabled, {
        "tempo_range": tempo_range,
        "pitch_range_cents": pitch_range,
        "gain_range_db": gain_range,
        "shift_range_ms": shift_range,
        "snr_range_db": snr_range,
    })
    entries = parse_manifest(manifest_path)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)

    per_utterance = len(speed_factors) if speed_factors else copies
    jobs = [(i, k) for i in range(len(entries)) for k in range(per_utterance)]

    def perturb(job) -> ManifestEntry:
        index, copy = job
        entry = entries[index]
        buffer = read_wav(resolve_audio_path(entry, manifest_path))
        spec = None
        if speed_factors:
            out = augmentation_service.speed(buffer, speed_factors[copy])
        else:
            spec = augmentation_service.sample_spec(policy, derive_rng(seed, "augment", index, copy))
            out = augmentation_service.apply(buffer, spec)
        relative = f"wav/{index:05d}_{copy}.wav"
        write_wav(out, out_dir / relative)
        return ManifestEntry(
            audio_path=relative, transcript=entry.transcript, duration_s=out.duration, augmentation=spec,
        )

    with ThreadPoolExecutor(max_workers=threads or settings.threads) as pool:
        augmented = list(pool.map(perturb, jobs))

    originals = [
        entry.model_copy(update={"audio_path": str(resolve_audio_path(entry, manifest_path).resolve())})
        for entry in entries
    ]
    write_manifest(originals + augmented, out_dir / MANIFEST_NAME)
    logger.info("augment_completed", utterances=len(entries), written=len(augmented), out_dir=str(out_dir))
