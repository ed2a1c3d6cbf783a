"""Energy, free energy, Gibbs probabilities and confidence scores.

All functions take a 1-D logit vector and operate in float64. The batched
variants used by training and inference live in :mod:`stagebank.kernels`.
"""
from __future__ import annotations

import numpy as np


class ContractError(ValueError):
    """Raised when an input violates an operation's precondition."""


def as_logits(logits) -> np.ndarray:
    v = np.asarray(logits, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ContractError(f"logits must be a nonempty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError("logits must be finite")
    return v


def _check_temperature(T: float) -> float:
    T = float(T)
    if not T > 0 or not np.isfinite(T):
        raise ContractError(f"temperature must be positive and finite, got {T}")
    return T


def energy_of_pair(logits, class_index: int) -> float:
    """Energy of an (input, label) pair: the negated logit of that label."""
    v = as_logits(logits)
    if not 0 <= class_index < v.size:
        raise IndexError(f"class index {class_index} out of range for {v.size} classes")
    return float(-v[class_index])


def stable_logsumexp(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ContractError("logsumexp needs a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ContractError("logsumexp inputs must be finite")
    m = v.max()
    return float(m + np.log(np.sum(np.exp(v - m))))


def free_energy(logits, T: float = 1.0) -> float:
    """Helmholtz free energy ``-T * logsumexp(logits / T)``."""
    T = _check_temperature(T)
    return -T * stable_logsumexp(as_logits(logits) / T)


def confidence_score(logits, T: float = 1.0) -> float:
    """Negative free energy; lies in ``[max(logits), max(logits) + T log C]``."""
    return -free_energy(logits, T)


def gibbs_probabilities(logits, T: float = 1.0) -> np.ndarray:
    T = _check_temperature(T)
    z = as_logits(logits) / T
    e = np.exp(z - z.max())
    return e / e.sum()
