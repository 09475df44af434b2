"""
Connectionist temporal classification: loss, gradient, oracle and greedy decoding

Lattices are T x C log-probabilities (C = alphabet size + 1, blank at 0).
All recursions run in log space in double precision.
"""
import itertools
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from app.exceptions import ConfigurationError, InfeasibleAlignmentError
from app.schemas.ctc import BLANK_INDEX, CTCResult, LabelSequence, validate_labels

NEG_INF = -np.inf
BRUTE_FORCE_LIMIT = 10 ** 7


def min_frames(labels: Sequence[int]) -> int:
    """Fewest frames that can emit ``labels``: one per label plus one blank per adjacent repeat"""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def is_feasible(num_frames: int, labels: Sequence[int]) -> bool:
    return num_frames >= min_frames(labels)


def _extend(labels: LabelSequence) -> Tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved label sequence and the mask of states reachable by a skip"""
    extended = np.full(2 * len(labels) + 1, BLANK_INDEX, dtype=np.int64)
    extended[1::2] = labels
    skip = np.zeros(len(extended), dtype=bool)
    if len(extended) > 2:
        skip[2:] = (extended[2:] != BLANK_INDEX) & (extended[2:] != extended[:-2])
    return extended, skip


def _forward(emit: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = emit.shape
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]
    return alpha


def _backward(emit: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = emit.shape
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]
    return beta


def _log_likelihood(alpha: np.ndarray) -> float:
    last = alpha[-1]
    if len(last) == 1:
        return float(last[0])
    return float(np.logaddexp(last[-1], last[-2]))


def ctc_loss(lattice: np.ndarray, labels: Sequence[int]) -> CTCResult:
    """
    -log p(labels | lattice) summed over all blank-augmented alignments

    Infeasible targets return loss = +inf with ``feasible=False``.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    labels = validate_labels(labels, lattice.shape[1])
    if lattice.shape[0] == 0 or not is_feasible(lattice.shape[0], labels):
        return CTCResult.infeasible()
    extended, skip = _extend(labels)
    alpha = _forward(lattice[:, extended], skip)
    return CTCResult(loss=-_log_likelihood(alpha), feasible=True)


def ctc_posteriors(lattice: np.ndarray, labels: Sequence[int]) -> Tuple[float, np.ndarray]:
    """
    Loss and the T x C matrix of per-frame class posteriors

    posterior[t, k] = P(frame t emits class k | labels, lattice); rows sum to 1.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    labels = validate_labels(labels, lattice.shape[1])
    T, C = lattice.shape
    if T == 0 or not is_feasible(T, labels):
        raise InfeasibleAlignmentError(
            f"{len(labels)} labels need at least {min_frames(labels)} frames, got {T}"
        )
    extended, skip = _extend(labels)
    emit = lattice[:, extended]
    alpha = _forward(emit, skip)
    beta = _backward(emit, skip)
    log_likelihood = _log_likelihood(alpha)

    # alpha and beta both include the emission at t
    log_gamma = alpha + beta - emit - log_likelihood
    posterior = np.zeros((T, C))
    for state, label in enumerate(extended):
        posterior[:, label] += np.exp(log_gamma[:, state])
    return -log_likelihood, posterior


def ctc_grad(lattice: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """
    Gradient of the loss with respect to the pre-softmax logits

    grad[t, k] = softmax[t, k] - posterior[t, k]; the lattice is the
    log-softmax of those logits.
    """
    _, posterior = ctc_posteriors(lattice, labels)
    return np.exp(np.asarray(lattice, dtype=np.float64)) - posterior


def ctc_loss_and_grad(lattice: np.ndarray, labels: Sequence[int]) -> Tuple[CTCResult, Optional[np.ndarray]]:
    """Loss plus logit gradient; gradient is None for infeasible targets"""
    lattice = np.asarray(lattice, dtype=np.float64)
    labels = validate_labels(labels, lattice.shape[1])
    if lattice.shape[0] == 0 or not is_feasible(lattice.shape[0], labels):
        return CTCResult.infeasible(), None
    loss, posterior = ctc_posteriors(lattice, labels)
    return CTCResult(loss=loss, feasible=True), np.exp(lattice) - posterior


def collapse(path: Sequence[int]) -> LabelSequence:
    """Merge adjacent repeats, then drop blanks"""
    out = []
    previous = None
    for symbol in path:
        if symbol != previous and symbol != BLANK_INDEX:
            out.append(int(symbol))
        previous = symbol
    return tuple(out)


def enumerate_label_posteriors(lattice: np.ndarray) -> Dict[LabelSequence, float]:
    """
    Log-probability of every collapsed label sequence, by enumerating all
    C^T frame paths
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    T, C = lattice.shape
    if C ** T > BRUTE_FORCE_LIMIT:
        raise ConfigurationError(f"{C}^{T} paths exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")
    grouped: Dict[LabelSequence, list] = {}
    frames = np.arange(T)
    for path in itertools.product(range(C), repeat=T):
        logp = float(lattice[frames, path].sum())
        grouped.setdefault(collapse(path), []).append(logp)
    return {labels: float(logsumexp(values)) for labels, values in grouped.items()}


def brute_force_ctc(lattice: np.ndarray, labels: Sequence[int]) -> float:
    """Reference -log p(labels) by path enumeration; only for tiny lattices"""
    lattice = np.asarray(lattice, dtype=np.float64)
    labels = validate_labels(labels, lattice.shape[1])
    posteriors = enumerate_label_posteriors(lattice)
    if labels not in posteriors:
        return math.inf
    return -posteriors[labels]


def greedy_decode(lattice: np.ndarray) -> LabelSequence:
    """Per-frame argmax, collapse repeats, drop blanks"""
    lattice = np.asarray(lattice)
    if lattice.shape[0] == 0:
        return ()
    return collapse(np.argmax(lattice, axis=1).tolist())


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable log-softmax"""
    return logits - logsumexp(logits, axis=axis, keepdims=True)
