"""
Standard and sequence-fixed dropout

Training multiplies by an unscaled 0/1 mask; evaluation rescales by (1 - p),
so E[train output] equals the eval output.
"""
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from app.exceptions import ConfigurationError

PER_TIMESTEP = "per-timestep"
FIXED_ACROSS_TIME = "fixed-across-time"


@dataclass(frozen=True)
class DropoutMask:
    """
    Binary keep-mask

    For the fixed-across-time kind the mask covers the feature dimensions
    only; its time axis (if present) has size 1 and broadcasts.
    """
    mask: np.ndarray
    p: float
    kind: str = PER_TIMESTEP

    @property
    def shape(self):
        return self.mask.shape


def _check_probability(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}")


def _bernoulli(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p).astype(np.float64)


def sample_standard_mask(
    shape: Union[int, Sequence[int]],
    p: float,
    rng: np.random.Generator,
) -> DropoutMask:
    """Independent Bernoulli(1 - p) keep decision for every entry"""
    _check_probability(p)
    return DropoutMask(mask=_bernoulli(shape, p, rng), p=p, kind=PER_TIMESTEP)


def sample_sequence_mask(
    feature_dim: Union[int, Sequence[int]],
    p: float,
    rng: np.random.Generator,
) -> DropoutMask:
    """
    One Bernoulli(1 - p) draw per feature, reused at every time step

    ``feature_dim`` is either d (for T x d inputs) or a shape with a size-1
    time axis that broadcasts against the layer input.
    """
    _check_probability(p)
    return DropoutMask(mask=_bernoulli(feature_dim, p, rng), p=p, kind=FIXED_ACROSS_TIME)


def apply_train(x: np.ndarray, mask: DropoutMask) -> np.ndarray:
    """x * mask, no rescaling"""
    try:
        broadcast = np.broadcast_shapes(x.shape, mask.mask.shape)
    except ValueError:
        broadcast = None
    if broadcast != x.shape:
        raise ConfigurationError(f"mask of shape {mask.mask.shape} does not broadcast to input {x.shape}")
    return x * mask.mask


def apply_train_backward(grad_out: np.ndarray, mask: DropoutMask) -> np.ndarray:
    """Gradient of apply_train with respect to x"""
    return grad_out * mask.mask


def apply_eval(x: np.ndarray, p: float) -> np.ndarray:
    """(1 - p) * x"""
    _check_probability(p)
    if p == 0.0:
        return x
    return x * (1.0 - p)
