"""
Corpus manifest schemas
"""
from typing import Optional

from pydantic import BaseModel, Field

from app.schemas.augmentation import AugmentationSpec


class ManifestEntry(BaseModel):
    """One utterance: audio file, transcript and duration"""
    audio_path: str = Field(..., min_length=1)
    transcript: str
    duration_s: float = Field(..., gt=0.0)
    augmentation: Optional[AugmentationSpec] = Field(
        default=None, description="Perturbation that produced this file, when written by augment"
    )
