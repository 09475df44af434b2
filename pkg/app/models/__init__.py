"""
Acoustic model: layer primitives, the full network and its checkpoint format
"""
from .layers import EVAL, TRAIN
from .speech_model import ModelOutput, count_parameters, init_params, init_state, model_backward, model_forward

__all__ = [
    "TRAIN",
    "EVAL",
    "ModelOutput",
    "count_parameters",
    "init_params",
    "init_state",
    "model_forward",
    "model_backward",
]
