"""
Augmentation parameter schemas
"""
from typing import Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from app.exceptions import ConfigurationError

Range = Tuple[float, float]

_UINT64_MAX = (1 << 64) - 1


class AugmentationSpec(BaseModel):
    """One sampled draw of the five perturbation parameters"""
    tempo_factor: float = Field(default=1.0, gt=0.0, le=4.0)
    pitch_cents: float = Field(default=0.0, ge=-1200.0, le=1200.0)
    gain_db: float = Field(default=0.0)
    shift_ms: float = Field(default=0.0, ge=0.0)
    snr_db: Optional[float] = Field(default=None)
    seed: int = Field(default=0, ge=0, le=_UINT64_MAX)

    model_config = {"frozen": True}

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentationSpec":
        """Spec that leaves audio unchanged"""
        return cls(seed=seed)


class AugmentationPolicy(BaseModel):
    """Uniform sampling ranges and per-perturbation enable flags"""
    tempo_range: Range = (0.7, 1.3)
    pitch_range_cents: Range = (-500.0, 500.0)
    gain_range_db: Range = (-20.0, 10.0)
    shift_range_ms: Range = (0.0, 10.0)
    snr_range_db: Range = (10.0, 15.0)

    enable_tempo: bool = True
    enable_pitch: bool = True
    enable_gain: bool = True
    enable_shift: bool = True
    enable_noise: bool = True

    @model_validator(mode="after")
    def check_ranges(self) -> "AugmentationPolicy":
        for name in ("tempo_range", "pitch_range_cents", "gain_range_db",
                     "shift_range_ms", "snr_range_db"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name}: low {low} exceeds high {high}")
        if self.tempo_range[0] <= 0 or self.tempo_range[1] > 4.0:
            raise ValueError("tempo_range must lie in (0, 4]")
        if self.shift_range_ms[0] < 0:
            raise ValueError("shift_range_ms must be non-negative")
        if max(abs(c) for c in self.pitch_range_cents) > 1200:
            raise ValueError("pitch_range_cents must lie in [-1200, 1200]")
        return self

    @property
    def any_enabled(self) -> bool:
        return any((self.enable_tempo, self.enable_pitch, self.enable_gain,
                    self.enable_shift, self.enable_noise))

    @classmethod
    def preset(cls, name: str) -> "AugmentationPolicy":
        """
        Named policies for the ablation rows

        none  - everything disabled
        noise - gain, shift and white noise ("noisy versions" of the data)
        tempo - independent tempo and pitch perturbation
        all   - every perturbation
        """
        flags = {
            "none": (False, False, False, False, False),
            "noise": (False, False, True, True, True),
            "tempo": (True, True, False, False, False),
            "all": (True, True, True, True, True),
        }
        if name not in flags:
            raise ConfigurationError(f"unknown augmentation preset '{name}', expected one of {sorted(flags)}")
        tempo, pitch, gain, shift, noise = flags[name]
        return cls(
            enable_tempo=tempo,
            enable_pitch=pitch,
            enable_gain=gain,
            enable_shift=shift,
            enable_noise=noise,
        )
