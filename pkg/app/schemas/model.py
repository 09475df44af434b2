"""
Acoustic model configuration schemas
"""
from typing import List, Tuple

from pydantic import BaseModel, Field, model_validator


class ConvSpec(BaseModel):
    """Convolution size as (channels, filter_freq, filter_time, stride_freq, stride_time)"""
    channels: int = Field(gt=0)
    filter_freq: int = Field(gt=0)
    filter_time: int = Field(gt=0)
    stride_freq: int = Field(default=1, gt=0)
    stride_time: int = Field(default=1, gt=0)

    @classmethod
    def of(cls, spec: Tuple[int, int, int, int, int]) -> "ConvSpec":
        c, f, t, sf, st = spec
        return cls(channels=c, filter_freq=f, filter_time=t, stride_freq=sf, stride_time=st)

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.channels, self.filter_freq, self.filter_time, self.stride_freq, self.stride_time)


class DropoutConfig(BaseModel):
    """Drop probabilities per layer group; all zero disables dropout"""
    data: float = Field(default=0.1, ge=0.0, lt=1.0)
    conv: float = Field(default=0.2, ge=0.0, lt=1.0)
    recurrent: float = Field(default=0.3, ge=0.0, lt=1.0)
    fc: float = Field(default=0.3, ge=0.0, lt=1.0)

    @classmethod
    def disabled(cls) -> "DropoutConfig":
        return cls(data=0.0, conv=0.0, recurrent=0.0, fc=0.0)

    @property
    def enabled(self) -> bool:
        return any(p > 0 for p in (self.data, self.conv, self.recurrent, self.fc))


class ModelConfig(BaseModel):
    """Layer sizes for the convolutional + bidirectional GRU + CTC model"""
    input_bins: int = Field(default=257, gt=0, description="Spectrogram frequency bins")
    front_conv: ConvSpec = Field(default_factory=lambda: ConvSpec.of((8, 41, 11, 2, 2)))
    residual_blocks: List[ConvSpec] = Field(
        default_factory=lambda: [ConvSpec.of((8, 3, 3, 1, 1)), ConvSpec.of((8, 3, 3, 1, 1))]
    )
    rnn_layers: int = Field(default=2, ge=1)
    rnn_hidden: int = Field(default=64, gt=0)
    fc_hidden: int = Field(default=64, gt=0)
    alphabet_size: int = Field(default=5, gt=0, description="Symbols excluding blank")
    dropout: DropoutConfig = Field(default_factory=DropoutConfig)
    batchnorm_momentum: float = Field(default=0.9, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelConfig":
        if not self.residual_blocks:
            raise ValueError("at least one residual block is required")
        if self.input_bins < self.front_conv.filter_freq:
            raise ValueError(
                f"input_bins {self.input_bins} smaller than front filter {self.front_conv.filter_freq}"
            )
        for block in self.residual_blocks:
            if block.filter_freq % 2 == 0 or block.filter_time % 2 == 0:
                raise ValueError("residual block filters must have odd sizes")
        return self

    @property
    def num_classes(self) -> int:
        return self.alphabet_size + 1

    @classmethod
    def desk_scale(cls, alphabet_size: int = 5, input_bins: int = 257) -> "ModelConfig":
        return cls(alphabet_size=alphabet_size, input_bins=input_bins)

    @classmethod
    def full_scale(cls, alphabet_size: int = 29, input_bins: int = 161) -> "ModelConfig":
        """Full-size layout: 5 residual blocks, 4 x 1024 bidirectional GRU, 1024 FC"""
        return cls(
            input_bins=input_bins,
            front_conv=ConvSpec.of((32, 41, 11, 2, 2)),
            residual_blocks=[
                ConvSpec.of((32, 7, 3, 1, 1)),
                ConvSpec.of((32, 5, 3, 1, 1)),
                ConvSpec.of((32, 3, 3, 1, 1)),
                ConvSpec.of((64, 3, 3, 2, 1)),
                ConvSpec.of((64, 3, 3, 1, 1)),
            ],
            rnn_layers=4,
            rnn_hidden=1024,
            fc_hidden=1024,
            alphabet_size=alphabet_size,
        )
