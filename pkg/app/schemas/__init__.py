"""
Domain types: pydantic models for configuration, dataclasses for numeric carriers
"""
from .audio import AudioBuffer
from .augmentation import AugmentationPolicy, AugmentationSpec
from .ctc import Alphabet, CTCResult, LabelSequence, BLANK_INDEX
from .decoding import BeamHypothesis, DecodeConfig, DecodeResult
from .evaluation import EvaluationResult, UtteranceHypothesis
from .features import FeatureStats, Spectrogram
from .manifest import ManifestEntry
from .model import ConvSpec, DropoutConfig, ModelConfig
from .training import (
    EpochRecord,
    REGULARIZATION_PRESETS,
    RegularizationReport,
    RegularizationRun,
    TrainConfig,
    TrainLog,
)

__all__ = [
    # Audio
    "AudioBuffer",
    "AugmentationPolicy", "AugmentationSpec",

    # Features
    "FeatureStats", "Spectrogram",

    # CTC and decoding
    "Alphabet", "CTCResult", "LabelSequence", "BLANK_INDEX",
    "BeamHypothesis", "DecodeConfig", "DecodeResult",

    # Model and training
    "ConvSpec", "DropoutConfig", "ModelConfig",
    "EpochRecord", "REGULARIZATION_PRESETS", "TrainConfig", "TrainLog",
    "RegularizationReport", "RegularizationRun",

    # Corpus and evaluation
    "ManifestEntry",
    "EvaluationResult", "UtteranceHypothesis",
]
