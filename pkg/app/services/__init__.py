"""
Pipeline services for the speech recognition toolkit

One module per stage; import the module you need
(``from app.services import ctc_service``).
"""

__all__ = [
    "audio_service",
    "augmentation_service",
    "feature_service",
    "dropout_service",
    "ctc_service",
    "lm_service",
    "decoder_service",
    "trainer_service",
    "evaluation_service",
    "corpus_service",
    "manifest_service",
    "storage",
]
