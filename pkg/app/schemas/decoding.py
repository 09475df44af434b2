"""
Beam search configuration and hypothesis types
"""
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.schemas.ctc import LabelSequence


class DecodeConfig(BaseModel):
    """Prefix beam search settings"""
    beam_width: int = Field(default=100, ge=1)
    lm_weight: float = Field(default=1.0, ge=0.0)
    insertion_bonus: float = Field(default=1.5)
    model: Optional[Any] = Field(default=None, description="NGramModel used for shallow fusion")
    symbols: Optional[Tuple[str, ...]] = Field(
        default=None,
        description="Symbol for each label id minus one; required when an LM is attached",
    )

    model_config = {"arbitrary_types_allowed": True}


@dataclass
class BeamHypothesis:
    """A label prefix with blank/non-blank ending log-probabilities"""
    prefix: LabelSequence
    logp_blank: float
    logp_nonblank: float
    lm_state: Tuple[str, ...] = ()
    lm_score: float = 0.0

    @property
    def acoustic_logp(self) -> float:
        return float(np.logaddexp(self.logp_blank, self.logp_nonblank))

    @property
    def score(self) -> float:
        """Combined score: acoustic log-probability plus fused LM and insertion terms"""
        return self.acoustic_logp + self.lm_score


@dataclass(frozen=True)
class DecodeResult:
    """One ranked entry of the n-best list"""
    labels: LabelSequence
    score: float
    acoustic_logp: float
    lm_score: float
