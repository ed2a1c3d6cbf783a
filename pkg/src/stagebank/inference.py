"""Stage selection by temperature voting, and final class prediction."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import CIL, DIL, MODES
from .energy import ContractError
from .head import EnergyConfig, StageHead, forward_batch
from .kernels import confidences, stage_winners


@dataclass
class ModelBank:
    heads: List[StageHead]
    omega: List[float] = field(default_factory=list)
    cfg: EnergyConfig = field(default_factory=EnergyConfig)
    mode: str = CIL

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}")
        for i, h in enumerate(self.heads):
            if h.stage_id != i + 1:
                raise ContractError(f"head at position {i} has stage id {h.stage_id}, expected {i + 1}")
        if len({h.feature_dim for h in self.heads}) > 1:
            raise ContractError("heads disagree on feature dimension")
        if len(self.heads) > 1:
            sets = [set(h.label_set) for h in self.heads]
            if self.mode == DIL:
                if any(s != sets[0] for s in sets[1:]):
                    raise ContractError("dil bank: label sets must be identical")
            elif sum(len(s) for s in sets) != len(set().union(*sets)):
                raise ContractError(f"{self.mode} bank: label sets must be disjoint")
        self.omega = [float(t) for t in self.omega]

    @property
    def num_stages(self):
        return len(self.heads)

    def temperatures(self):
        """Voting temperatures: Omega, or [1.0] before any calibration."""
        return list(self.omega) if self.omega else [1.0]


@dataclass
class PredictionResult:
    chosen_stage: int
    chosen_class: int
    votes: list
    confidences_at_1: list


def bank_logits(heads, X):
    """Pack every head's logits for X into ``(S, N, Cmax)`` plus per-head class counts."""
    X = np.asarray(X, dtype=np.float64)
    if not heads:
        raise ContractError("bank is empty")
    counts = np.array([h.num_classes for h in heads], dtype=np.int64)
    out = np.zeros((len(heads), X.shape[0], counts.max()))
    for s, h in enumerate(heads):
        out[s, :, : counts[s]] = forward_batch(h, X)
    return out, counts


def stage_votes(feature, bank: ModelBank):
    """One ``(temperature, winning stage id)`` pair per voting temperature."""
    x = np.asarray(feature, dtype=np.float64)[None, :]
    logits, counts = bank_logits(bank.heads, x)
    temps = bank.temperatures()
    winners = stage_winners(logits, counts, np.asarray(temps))
    return [(t, int(w) + 1) for t, w in zip(temps, winners[:, 0])]


def select_stage(votes, confidences_at_1: Optional[dict] = None) -> int:
    """Most frequent stage among the votes.

    Ties on count go to the stage with the higher T=1 confidence (when
    ``confidences_at_1`` maps stage id to confidence), then to the smallest id.
    """
    if not votes:
        raise ContractError("no votes to select from")
    tally = Counter(stage for _, stage in votes)
    top = max(tally.values())
    tied = sorted(s for s, c in tally.items() if c == top)
    if len(tied) > 1 and confidences_at_1 is not None:
        best = max(confidences_at_1[s] for s in tied)
        tied = [s for s in tied if confidences_at_1[s] == best]
    return tied[0]


def predict(feature, bank: ModelBank) -> PredictionResult:
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != bank.heads[0].feature_dim:
        raise ContractError(f"feature must be a vector of length {bank.heads[0].feature_dim}")
    logits, counts = bank_logits(bank.heads, x[None, :])
    temps = bank.temperatures()
    winners = stage_winners(logits, counts, np.asarray(temps))[:, 0]
    votes = [(t, int(w) + 1) for t, w in zip(temps, winners)]
    conf1 = confidences(logits, counts, 1.0)[:, 0]
    conf_map = {s + 1: float(c) for s, c in enumerate(conf1)}
    stage = select_stage(votes, conf_map)
    row = logits[stage - 1, 0, : counts[stage - 1]]
    cls = bank.heads[stage - 1].label_set[int(np.argmax(row))]
    return PredictionResult(stage, cls, votes, conf1.tolist())


def predict_batch(bank: ModelBank, X, temperatures=None):
    """Vectorized :func:`predict` over the rows of X.

    Returns ``(stage_ids, classes)`` as int64 arrays in input order.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != bank.heads[0].feature_dim:
        raise ContractError(f"features must be (N, {bank.heads[0].feature_dim})")
    n, S = X.shape[0], bank.num_stages
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    logits, counts = bank_logits(bank.heads, X)
    temps = np.asarray(bank.temperatures() if temperatures is None else temperatures, dtype=np.float64)
    winners = stage_winners(logits, counts, temps)
    tally = np.zeros((n, S), dtype=np.int64)
    for row in winners:
        tally[np.arange(n), row] += 1
    tied = tally == tally.max(axis=1, keepdims=True)
    conf1 = confidences(logits, counts, 1.0).T
    stage_idx = np.where(tied, conf1, -np.inf).argmax(axis=1)
    classes = np.empty(n, dtype=np.int64)
    for s in range(S):
        sel = stage_idx == s
        if sel.any():
            local = logits[s, sel, : counts[s]].argmax(axis=1)
            classes[sel] = np.asarray(bank.heads[s].label_set)[local]
    return stage_idx + 1, classes


def stage_id_accuracy(X, true_stage, heads, T: float = 1.0) -> float:
    """Fraction of rows whose most confident head at temperature T is their own stage."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ContractError("stage-id accuracy needs at least one record")
    logits, counts = bank_logits(heads, X)
    winners = stage_winners(logits, counts, np.array([float(T)]))[0] + 1
    return float(np.mean(winners == np.asarray(true_stage)))


def criterion3_check(X, true_stage, bank: ModelBank) -> float:
    """Fraction of rows whose own-stage head is strictly the most confident at T=1."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return float("nan")
    true_idx = np.asarray(true_stage, dtype=np.int64) - 1
    logits, counts = bank_logits(bank.heads, X)
    conf = confidences(logits, counts, 1.0)
    own = conf[true_idx, np.arange(X.shape[0])]
    others = conf.copy()
    others[true_idx, np.arange(X.shape[0])] = -np.inf
    return float(np.mean(own > others.max(axis=0)))
