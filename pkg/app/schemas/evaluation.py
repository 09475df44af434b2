"""
Evaluation report schemas
"""
from typing import List

from pydantic import BaseModel, Field


class UtteranceHypothesis(BaseModel):
    """Reference/hypothesis pair with its edit counts"""
    audio_path: str
    reference: str
    hypothesis: str
    char_edits: int
    word_edits: int


class EvaluationResult(BaseModel):
    """Corpus-level error rates: total edits over total reference tokens"""
    cer: float = Field(ge=0.0)
    wer: float = Field(ge=0.0)
    utterances: int = Field(ge=0)
    skipped: int = Field(default=0, ge=0)
    char_edits: int = Field(default=0, ge=0)
    reference_chars: int = Field(default=0, ge=0)
    word_edits: int = Field(default=0, ge=0)
    reference_words: int = Field(default=0, ge=0)
    hypotheses: List[UtteranceHypothesis] = Field(default_factory=list)
