"""
Training loop: Nesterov SGD with clipping and weight decay, plateau
learning-rate halving, on-the-fly augmentation and dropout
"""
import copy
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from tqdm import tqdm

from app.config import settings
from app.exceptions import ConfigurationError, DataError, FeatureError, NumericalError
from app.models.checkpoint import Checkpoint, save_checkpoint
from app.models.layers import TRAIN
from app.models.speech_model import Params, init_params, init_state, model_backward, model_forward, predict_lattices
from app.rng import derive_rng
from app.schemas.audio import AudioBuffer
from app.schemas.ctc import Alphabet, LabelSequence
from app.schemas.features import FeatureStats, Spectrogram
from app.schemas.manifest import ManifestEntry
from app.schemas.model import ModelConfig
from app.schemas.training import (
    EpochRecord,
    RegularizationReport,
    RegularizationRun,
    TrainConfig,
    TrainLog,
)
from app.services import augmentation_service, ctc_service, evaluation_service
from app.services.audio_service import load_audio
from app.services.feature_service import compute_stats, extract_features, normalize_utterance, save_stats, spectrogram
from app.services.manifest_service import resolve_audio_path
from app.services.storage import atomic_write_text

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

CHECKPOINT_NAME = "best.ckpt"
LOG_NAME = "train_log.csv"
STATS_NAME = "feature_stats.bin"


@dataclass(frozen=True)
class StepStats:
    """Global gradient norm before and after clipping"""
    grad_norm: float
    clipped_norm: float


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(grads[name] ** 2)) for name in sorted(grads)))


def sgd_step(
    params: Params,
    grads: Params,
    velocity: Params,
    config: TrainConfig,
    lr: Optional[float] = None,
) -> StepStats:
    """
    One in-place update of ``params`` and the momentum buffers ``velocity``

    g = grad + weight_decay * w, then every g is scaled by clip_norm / ||g||
    when the global norm exceeds clip_norm. Nesterov momentum:
        v <- momentum * v + g
        w <- w - lr * (g + momentum * v)
    Plain momentum uses w <- w - lr * v.
    """
    lr = config.lr if lr is None else lr
    names = sorted(params)
    for name in names:
        if name not in grads:
            raise ConfigurationError(f"no gradient for parameter {name}")
        if grads[name].shape != params[name].shape:
            raise ConfigurationError(
                f"gradient for {name} has shape {grads[name].shape}, parameter has {params[name].shape}"
            )
        if not np.all(np.isfinite(grads[name])):
            raise NumericalError(f"non-finite gradient for parameter {name}", parameter=name)

    decayed = {name: grads[name] + config.weight_decay * params[name] for name in names}
    norm = global_norm(decayed)
    scale = config.clip_norm / norm if norm > config.clip_norm else 1.0

    for name in names:
        g = decayed[name] * scale
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(g)
        v = config.momentum * v + g
        velocity[name] = v
        step = g + config.momentum * v if config.nesterov else v
        params[name] -= lr * step
    return StepStats(grad_norm=norm, clipped_norm=norm * scale)


@dataclass
class PlateauState:
    """Validation-loss plateau bookkeeping replayed from a TrainLog"""
    best: float = math.inf
    bad_epochs: int = 0
    plateaus: int = 0
    plateaus_since_improvement: int = 0
    plateau_at_last_epoch: bool = False


def plateau_state(log: TrainLog, patience: int, threshold: float = 1e-4) -> PlateauState:
    """
    An epoch improves when its validation loss beats the best so far by more
    than ``threshold``; ``patience`` consecutive non-improving epochs form a
    plateau, after which the counter starts again.
    """
    state = PlateauState()
    for record in log.records:
        state.plateau_at_last_epoch = False
        if record.val_loss < state.best - threshold:
            state.best = record.val_loss
            state.bad_epochs = 0
            state.plateaus_since_improvement = 0
            continue
        state.bad_epochs += 1
        if state.bad_epochs >= patience:
            state.plateaus += 1
            state.plateaus_since_improvement += 1
            state.bad_epochs = 0
            state.plateau_at_last_epoch = True
    return state


def lr_schedule_update(log: TrainLog, lr: float, patience: int, threshold: float = 1e-4) -> float:
    """Halve ``lr`` when the latest epoch completes a validation plateau"""
    if not log.records:
        raise ConfigurationError("learning-rate schedule needs at least one completed epoch")
    if plateau_state(log, patience, threshold).plateau_at_last_epoch:
        return lr / 2.0
    return lr


def should_stop(log: TrainLog, config: TrainConfig) -> bool:
    """
    Stop at max_epochs, or at the plateau that follows max_halvings halvings
    with no improvement in between
    """
    if len(log) >= config.max_epochs:
        return True
    state = plateau_state(log, config.plateau_patience, config.plateau_threshold)
    return state.plateaus_since_improvement > config.max_halvings


def make_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> List[List[int]]:
    """
    Group utterances of similar length: sort by length, cut into batches,
    shuffle batch order. A trailing single-utterance batch joins its
    neighbour so batch norm always sees at least two utterances.
    """
    if len(lengths) < 2:
        raise ConfigurationError(f"training needs at least 2 utterances, got {len(lengths)}")
    if batch_size < 2:
        raise ConfigurationError("batch norm needs batches of at least 2 utterances")
    order = np.argsort(np.asarray(lengths), kind="stable").tolist()
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2].extend(batches.pop())
    return [batches[i] for i in rng.permutation(len(batches))]


def encode_transcripts(entries: Sequence[ManifestEntry], alphabet: Alphabet) -> List[LabelSequence]:
    labels = []
    for entry in entries:
        try:
            labels.append(alphabet.encode(entry.transcript))
        except ValueError as e:
            raise DataError(f"{entry.audio_path}: {e}") from None
    return labels


def _parallel_map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def batch_loss_and_grads(
    lattices: Sequence[np.ndarray],
    labels: Sequence[LabelSequence],
) -> Tuple[List[float], List[Optional[np.ndarray]], int]:
    """
    Per-utterance CTC losses and logit gradients scaled for a mean over the
    feasible utterances; infeasible ones get no gradient and are counted
    """
    results = [ctc_service.ctc_loss_and_grad(lattice, label) for lattice, label in zip(lattices, labels)]
    feasible = [r for r, _ in results if r.feasible]
    skipped = len(results) - len(feasible)
    if not feasible:
        return [], [None] * len(results), skipped
    scale = 1.0 / len(feasible)
    losses = [r.loss for r in feasible]
    grads = [g * scale if g is not None else None for _, g in results]
    return losses, grads, skipped


def mean_ctc_loss(lattices: Sequence[np.ndarray], labels: Sequence[LabelSequence]) -> float:
    """Mean loss over feasible utterances; +inf when none is feasible"""
    losses = [ctc_service.ctc_loss(lattice, label) for lattice, label in zip(lattices, labels)]
    feasible = [r.loss for r in losses if r.feasible]
    return float(np.mean(feasible)) if feasible else math.inf


@dataclass
class TrainResult:
    """Best checkpoint, full log and the feature statistics used"""
    checkpoint: Checkpoint
    log: TrainLog
    stats: FeatureStats
    best_epoch: int


class Trainer:
    """
    Runs one training job over in-memory audio

    Randomness is keyed by (seed, purpose, epoch, index), so results do not
    depend on the worker count.
    """

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        alphabet: Alphabet,
        threads: Optional[int] = None,
        show_progress: bool = False,
    ):
        if model_config.alphabet_size != len(alphabet.symbols):
            raise ConfigurationError(
                f"model alphabet size {model_config.alphabet_size} does not match "
                f"the {len(alphabet.symbols)}-symbol alphabet"
            )
        self.model_config = model_config.model_copy(update={"dropout": train_config.dropout})
        self.config = train_config
        self.alphabet = alphabet
        self.threads = threads or settings.threads
        self.show_progress = show_progress

    def _features(self, buffers: Sequence[AudioBuffer], stats: FeatureStats) -> List[Spectrogram]:
        return _parallel_map(lambda b: extract_features(b, stats), buffers, self.threads)

    def _augmented(self, buffers: Sequence[AudioBuffer], stats: FeatureStats, epoch: int) -> List[Optional[Spectrogram]]:
        policy = self.config.augmentation

        def augment(item):
            index, buffer = item
            spec = augmentation_service.sample_spec(policy, derive_rng(self.config.seed, "augment", epoch, index))
            try:
                return extract_features(augmentation_service.apply(buffer, spec), stats)
            except FeatureError:
                return None

        return _parallel_map(augment, list(enumerate(buffers)), self.threads)

    def fit(
        self,
        train_buffers: Sequence[AudioBuffer],
        train_labels: Sequence[LabelSequence],
        val_buffers: Sequence[AudioBuffer],
        val_labels: Sequence[LabelSequence],
        stats: Optional[FeatureStats] = None,
    ) -> TrainResult:
        config = self.config
        if stats is None:
            stats = compute_stats(normalize_utterance(spectrogram(b)) for b in train_buffers)
        base_features = self._features(train_buffers, stats)
        val_features = self._features(val_buffers, stats)

        params = init_params(self.model_config, derive_rng(config.seed, "init"))
        state = init_state(self.model_config)
        velocity: Params = {}
        log = TrainLog()
        lr = config.lr
        best = (math.inf, 0, copy.deepcopy(params), copy.deepcopy(state))

        for epoch in range(1, config.max_epochs + 1):
            started = time.perf_counter()
            features: List[Spectrogram] = list(base_features)
            labels: List[LabelSequence] = list(train_labels)
            if config.augment and config.augmentation.any_enabled:
                for spec, label in zip(self._augmented(train_buffers, stats, epoch), train_labels):
                    if spec is not None:
                        features.append(spec)
                        labels.append(label)

            batches = make_batches([f.num_frames for f in features], config.batch_size,
                                   derive_rng(config.seed, "batches", epoch))
            total_loss, counted, skipped = 0.0, 0, 0
            progress = tqdm(batches, desc=f"epoch {epoch}", disable=not self.show_progress)
            for batch_index, batch in enumerate(progress):
                output = model_forward(
                    [features[i] for i in batch], params, state, self.model_config, mode=TRAIN,
                    rng=derive_rng(config.seed, "dropout", epoch, batch_index),
                )
                losses, grads, batch_skipped = batch_loss_and_grads(output.lattices(), [labels[i] for i in batch])
                skipped += batch_skipped
                if not losses:
                    continue
                total_loss += sum(losses)
                counted += len(losses)
                step = sgd_step(params, model_backward(grads, output, params, self.model_config), velocity, config, lr)
                logger.debug("sgd_step", epoch=epoch, batch=batch_index, grad_norm=step.grad_norm,
                             clipped_norm=step.clipped_norm)

            train_loss = total_loss / counted if counted else math.inf
            val_lattices = predict_lattices(val_features, params, state, self.model_config, config.batch_size)
            val_loss = mean_ctc_loss(val_lattices, val_labels)
            record = EpochRecord(
                epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=lr,
                seconds=time.perf_counter() - started, skipped=skipped,
            )
            log.append(record)
            logger.info("epoch_completed", epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                        lr=lr, skipped=skipped, seconds=round(record.seconds, 3))

            if val_loss < best[0]:
                best = (val_loss, epoch, copy.deepcopy(params), copy.deepcopy(state))
            if should_stop(log, config):
                break
            new_lr = lr_schedule_update(log, lr, config.plateau_patience, config.plateau_threshold)
            if new_lr != lr:
                logger.info("lr_halved", epoch=epoch, lr=new_lr)
            lr = new_lr

        _, best_epoch, best_params, best_state = best
        checkpoint = Checkpoint(
            config=self.model_config, params=best_params, state=best_state, alphabet=self.alphabet.symbols,
        )
        return TrainResult(checkpoint=checkpoint, log=log, stats=stats, best_epoch=best_epoch)


def load_buffers(entries: Sequence[ManifestEntry], manifest_path: PathLike, threads: Optional[int] = None):
    threads = threads or settings.threads
    return _parallel_map(
        lambda e: load_audio(resolve_audio_path(e, manifest_path), settings.sample_rate), entries, threads,
    )


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_entries: Sequence[ManifestEntry],
    val_entries: Sequence[ManifestEntry],
    train_manifest: PathLike,
    val_manifest: PathLike,
    alphabet: Alphabet,
    out_dir: Optional[PathLike] = None,
    stats: Optional[FeatureStats] = None,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> TrainResult:
    """
    Train from manifests; with ``out_dir`` the best checkpoint, the log CSV
    and the feature statistics are written there
    """
    trainer = Trainer(model_config, train_config, alphabet, threads, show_progress)
    result = trainer.fit(
        load_buffers(train_entries, train_manifest, threads),
        encode_transcripts(train_entries, alphabet),
        load_buffers(val_entries, val_manifest, threads),
        encode_transcripts(val_entries, alphabet),
        stats,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.checkpoint, out_dir / CHECKPOINT_NAME)
        atomic_write_text(out_dir / LOG_NAME, result.log.to_csv())
        save_stats(result.stats, out_dir / STATS_NAME)
    logger.info("training_completed", epochs=len(result.log), best_epoch=result.best_epoch)
    return result


def greedy_cer(
    checkpoint: Checkpoint,
    features: Sequence[Spectrogram],
    references: Sequence[str],
    batch_size: int = 16,
) -> float:
    """Validation CER under greedy decoding"""
    alphabet = Alphabet(checkpoint.alphabet)
    lattices = predict_lattices(features, checkpoint.params, checkpoint.state, checkpoint.config, batch_size)
    hypotheses = [alphabet.decode(ctc_service.greedy_decode(lattice)) for lattice in lattices]
    return evaluation_service.score_transcripts(references, hypotheses).cer


def run_regularization_experiment(
    train_entries: Sequence[ManifestEntry],
    val_entries: Sequence[ManifestEntry],
    train_manifest: PathLike,
    val_manifest: PathLike,
    alphabet: Alphabet,
    model_config: ModelConfig,
    seeds: Sequence[int] = (0, 1, 2),
    overrides: Optional[dict] = None,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> RegularizationReport:
    """
    Train the weight-decay-only baseline and the fully regularized preset
    for every seed; count the seeds where regularization narrows the
    best-epoch (val - train) gap and lowers validation CER
    """
    overrides = overrides or {}
    train_buffers = load_buffers(train_entries, train_manifest, threads)
    val_buffers = load_buffers(val_entries, val_manifest, threads)
    train_labels = encode_transcripts(train_entries, alphabet)
    val_labels = encode_transcripts(val_entries, alphabet)
    stats = compute_stats(normalize_utterance(spectrogram(b)) for b in train_buffers)
    val_features = [extract_features(b, stats) for b in val_buffers]
    references = [e.transcript for e in val_entries]

    report = RegularizationReport(seeds=list(seeds))
    for seed in seeds:
        outcome: Dict[str, RegularizationRun] = {}
        for preset in ("baseline", "all_regularization"):
            config = TrainConfig.from_preset(preset, seed=seed, **overrides)
            result = Trainer(model_config, config, alphabet, threads, show_progress).fit(
                train_buffers, train_labels, val_buffers, val_labels, stats,
            )
            best = result.log.best_record
            run = RegularizationRun(
                preset=preset,
                seed=seed,
                epochs=len(result.log),
                best_epoch=best.epoch,
                best_val_loss=best.val_loss,
                train_loss_at_best=best.train_loss,
                gap=best.val_loss - best.train_loss,
                val_cer=greedy_cer(result.checkpoint, val_features, references, config.batch_size),
            )
            logger.info("regularization_run", **run.model_dump())
            outcome[preset] = run
            report.runs.append(run)
        narrowed = outcome["all_regularization"].gap < outcome["baseline"].gap
        lower = outcome["all_regularization"].val_cer < outcome["baseline"].val_cer
        report.gap_narrowed += int(narrowed)
        report.cer_lower += int(lower)
        report.both_improved += int(narrowed and lower)
    logger.info("regularization_experiment_completed", gap_narrowed=report.gap_narrowed,
                cer_lower=report.cer_lower, both_improved=report.both_improved, seeds=len(report.seeds))
    return report
