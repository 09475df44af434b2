"""
Training configuration and log schemas
"""
import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from app.exceptions import ConfigurationError

from app.schemas.augmentation import AugmentationPolicy
from app.schemas.model import DropoutConfig

# preset name -> (augmentation preset, dropout enabled)
REGULARIZATION_PRESETS: Dict[str, Tuple[str, bool]] = {
    "baseline": ("none", False),
    "noise": ("noise", False),
    "tempo": ("tempo", False),
    "all_augmentation": ("all", False),
    "dropout": ("none", True),
    "all_regularization": ("all", True),
}


class TrainConfig(BaseModel):
    """Optimizer, schedule and regularization settings"""
    batch_size: int = Field(default=16, ge=2)
    lr: float = Field(default=0.1, gt=0.0)
    momentum: float = Field(default=0.95, ge=0.0, lt=1.0)
    nesterov: bool = True
    clip_norm: float = Field(default=1.0, gt=0.0)
    weight_decay: float = Field(default=1e-5, ge=0.0)

    plateau_patience: int = Field(default=2, ge=1)
    plateau_threshold: float = Field(default=1e-4, ge=0.0)
    max_halvings: int = Field(default=5, ge=0)
    max_epochs: int = Field(default=100, ge=1)

    seed: int = Field(default=0, ge=0)

    augment: bool = False
    augmentation: AugmentationPolicy = Field(default_factory=AugmentationPolicy)
    dropout: DropoutConfig = Field(default_factory=DropoutConfig.disabled)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "TrainConfig":
        """Config for one ablation row: baseline means weight decay only"""
        if name not in REGULARIZATION_PRESETS:
            raise ConfigurationError(
                f"unknown regularization preset '{name}', expected one of {sorted(REGULARIZATION_PRESETS)}"
            )
        augmentation_preset, dropout_enabled = REGULARIZATION_PRESETS[name]
        policy = AugmentationPolicy.preset(augmentation_preset)
        values = {
            "augment": policy.any_enabled,
            "augmentation": policy,
            "dropout": DropoutConfig() if dropout_enabled else DropoutConfig.disabled(),
        }
        values.update(overrides)
        return cls(**values)


@dataclass
class EpochRecord:
    """
    One row of the training log

    train_loss is the mean CTC loss over the epoch's training batches as they
    were optimized: dropout masks and augmented copies active, parameters
    changing between batches. val_loss is measured in eval mode after the
    epoch, so their difference includes the regularizers' own train-time cost.
    """
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float
    skipped: int = 0


CSV_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "seconds")


@dataclass
class TrainLog:
    """Per-epoch losses, learning rate and wall time"""
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError(
                f"epoch {record.epoch} does not follow epoch {self.records[-1].epoch}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> List[float]:
        return [r.val_loss for r in self.records]

    @property
    def best_record(self) -> Optional[EpochRecord]:
        if not self.records:
            return None
        return min(self.records, key=lambda r: (r.val_loss, r.epoch))

    def to_csv(self, include_time: bool = True) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            seconds = f"{r.seconds:.3f}" if include_time else "0"
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr), seconds])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        log = cls()
        for row in csv.DictReader(io.StringIO(text)):
            log.append(EpochRecord(
                epoch=int(row["epoch"]),
                train_loss=float(row["train_loss"]),
                val_loss=float(row["val_loss"]),
                lr=float(row["lr"]),
                seconds=float(row["seconds"]),
            ))
        return log


class RegularizationRun(BaseModel):
    """Outcome of one (preset, seed) training run"""
    preset: str
    seed: int
    epochs: int
    best_epoch: int
    best_val_loss: float
    train_loss_at_best: float
    gap: float = Field(description="val_loss - train_loss at the best epoch (train_loss in train mode)")
    val_cer: float


class RegularizationReport(BaseModel):
    """Baseline-vs-regularized comparison over several seeds"""
    runs: List[RegularizationRun] = Field(default_factory=list)
    seeds: List[int] = Field(default_factory=list)
    gap_narrowed: int = Field(default=0, description="Seeds where the regularized gap is smaller")
    cer_lower: int = Field(default=0, description="Seeds where the regularized validation CER is lower")
    both_improved: int = Field(default=0, description="Seeds where the gap is smaller and the CER lower")

    @property
    def gap_claim_holds(self) -> bool:
        return 2 * self.gap_narrowed > len(self.seeds)

    @property
    def cer_claim_holds(self) -> bool:
        return 2 * self.cer_lower > len(self.seeds)

    @property
    def claim_holds(self) -> bool:
        """A majority of seeds improve on both the gap and the CER"""
        return 2 * self.both_improved > len(self.seeds)
