"""Per-stage classifier heads and the analytic gradient of their training loss.

A head maps a feature vector to one logit per class of its stage. Two
variants exist: a single affine layer (default) and a one-hidden-layer
tanh MLP. The training loss per example is

    ce + lam * (F - anchor) ** 2,      F = -T * logsumexp(logits / T)

averaged over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .energy import ContractError
from .kernels import row_logsumexp

LINEAR = "linear"
MLP = "mlp"
PARAM_NAMES = ("weights", "bias", "hidden_weights", "hidden_bias")


@dataclass(frozen=True)
class EnergyConfig:
    anchor: float = -10.0
    lam: float = 0.1
    train_temperature: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if not self.train_temperature > 0:
            raise ContractError("train_temperature must be positive")


@dataclass
class StageHead:
    stage_id: int
    label_set: tuple
    weights: np.ndarray
    bias: np.ndarray
    hidden_weights: Optional[np.ndarray] = None
    hidden_bias: Optional[np.ndarray] = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.label_set = tuple(int(c) for c in self.label_set)
        if self.stage_id < 1:
            raise ContractError(f"stage_id must be >= 1, got {self.stage_id}")
        if not self.label_set or len(set(self.label_set)) != len(self.label_set):
            raise ContractError("label_set must be nonempty with unique entries")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        c = len(self.label_set)
        if (self.hidden_weights is None) != (self.hidden_bias is None):
            raise ContractError("hidden_weights and hidden_bias must be given together")
        if self.hidden_weights is not None:
            self.hidden_weights = np.asarray(self.hidden_weights, dtype=np.float64)
            self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
            h = self.hidden_weights.shape[0]
            if self.hidden_weights.ndim != 2 or self.hidden_bias.shape != (h,):
                raise ContractError("hidden layer shapes are inconsistent")
            if self.weights.shape != (c, h):
                raise ContractError(f"weights must be {(c, h)}, got {self.weights.shape}")
        elif self.weights.ndim != 2 or self.weights.shape[0] != c:
            raise ContractError(f"weights must have {c} rows, got shape {self.weights.shape}")
        if self.bias.shape != (c,):
            raise ContractError(f"bias must have shape {(c,)}, got {self.bias.shape}")
        for name, p in self.parameters().items():
            if not np.all(np.isfinite(p)):
                raise ContractError(f"parameter {name} has non-finite entries")
        self._index = {g: i for i, g in enumerate(self.label_set)}

    @property
    def variant(self) -> str:
        return LINEAR if self.hidden_weights is None else MLP

    @property
    def num_classes(self) -> int:
        return len(self.label_set)

    @property
    def feature_dim(self) -> int:
        if self.hidden_weights is not None:
            return self.hidden_weights.shape[1]
        return self.weights.shape[1]

    def local_index(self, label: int) -> int:
        try:
            return self._index[int(label)]
        except KeyError:
            raise ContractError(f"label {label} not in stage {self.stage_id} label set") from None

    def parameters(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES if getattr(self, n) is not None}

    def copy(self) -> "StageHead":
        return replace(self, **{n: p.copy() for n, p in self.parameters().items()})


def init_head(stage_id, label_set, feature_dim, rng, variant=LINEAR, hidden=64) -> StageHead:
    """Seeded init: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    c = len(label_set)
    if variant == LINEAR:
        bound = 1.0 / np.sqrt(feature_dim)
        return StageHead(stage_id, label_set, rng.uniform(-bound, bound, (c, feature_dim)), np.zeros(c))
    if variant == MLP:
        bound = 1.0 / np.sqrt(feature_dim)
        hw = rng.uniform(-bound, bound, (hidden, feature_dim))
        bound = 1.0 / np.sqrt(hidden)
        w = rng.uniform(-bound, bound, (c, hidden))
        return StageHead(stage_id, label_set, w, np.zeros(c), hw, np.zeros(hidden))
    raise ContractError(f"unknown head variant {variant!r}")


def _hidden(head, X):
    return np.tanh(X @ head.hidden_weights.T + head.hidden_bias)


def forward_batch(head: StageHead, X) -> np.ndarray:
    """Logits for a (N, D) feature matrix; returns (N, C)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != head.feature_dim:
        raise ContractError(f"features must be (N, {head.feature_dim}), got {X.shape}")
    if head.hidden_weights is not None:
        X = _hidden(head, X)
    return X @ head.weights.T + head.bias


def forward(head: StageHead, feature) -> np.ndarray:
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("forward takes a single 1-D feature vector")
    return forward_batch(head, x[None, :])[0]


def _free_energies(Z, T):
    return -T * row_logsumexp(Z / T)


def ce_loss(head, feature, local_label: int, cfg: EnergyConfig = EnergyConfig()) -> float:
    z = forward(head, feature)
    if not 0 <= local_label < z.size:
        raise IndexError(f"local label {local_label} out of range for {z.size} classes")
    T = cfg.train_temperature
    F = _free_energies(z[None, :], T)[0]
    return float((-z[local_label] - F) / T)


def anchor_loss(head, feature, cfg: EnergyConfig = EnergyConfig()) -> float:
    z = forward(head, feature)
    F = _free_energies(z[None, :], cfg.train_temperature)[0]
    return float((F - cfg.anchor) ** 2)


def _unpack(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        X, y = batch
    else:
        if len(batch) == 0:
            raise ContractError("batch must be nonempty")
        X = np.stack([np.asarray(f, dtype=np.float64) for f, _ in batch])
        y = [lab for _, lab in batch]
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ContractError("batch must be nonempty")
    if y.shape != (X.shape[0],):
        raise ContractError("labels must match the number of features")
    return X, y


def _batch_terms(head, X, y, cfg):
    Z = forward_batch(head, X)
    if y.min() < 0 or y.max() >= Z.shape[1]:
        raise IndexError("local label out of range")
    T = cfg.train_temperature
    F = _free_energies(Z, T)
    ce = (-Z[np.arange(len(y)), y] - F) / T
    al = (F - cfg.anchor) ** 2
    return Z, F, ce, al


def total_loss(head, batch, cfg: EnergyConfig = EnergyConfig()) -> float:
    """Batch mean of ``ce + lam * anchor``.

    ``batch`` is either a list of ``(feature, local_label)`` pairs or an
    ``(X, y)`` tuple of arrays.
    """
    X, y = _unpack(batch)
    _, _, ce, al = _batch_terms(head, X, y, cfg)
    return float(np.mean(ce + cfg.lam * al))


def loss_and_gradients(head, batch, cfg: EnergyConfig = EnergyConfig()):
    X, y = _unpack(batch)
    Z, F, ce, al = _batch_terms(head, X, y, cfg)
    n = len(y)
    T = cfg.train_temperature
    P = np.exp((Z + F[:, None]) / T)  # softmax(Z / T), since F = -T lse(Z / T)
    P /= P.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(P)
    onehot[np.arange(n), y] = 1.0
    # dce/dz = (p - onehot) / T ; dF/dz = -p
    G = (P - onehot) / T - (2.0 * cfg.lam) * (F - cfg.anchor)[:, None] * P
    G /= n
    grads = {}
    if head.hidden_weights is None:
        grads["weights"] = G.T @ X
        grads["bias"] = G.sum(axis=0)
    else:
        H = _hidden(head, X)
        grads["weights"] = G.T @ H
        grads["bias"] = G.sum(axis=0)
        dpre = (G @ head.weights) * (1.0 - H * H)
        grads["hidden_weights"] = dpre.T @ X
        grads["hidden_bias"] = dpre.sum(axis=0)
    return float(np.mean(ce + cfg.lam * al)), grads


def gradients(head, batch, cfg: EnergyConfig = EnergyConfig()) -> dict:
    """Analytic gradient of :func:`total_loss`, keyed by parameter name."""
    return loss_and_gradients(head, batch, cfg)[1]


def free_energies(head, X, T: float = 1.0) -> np.ndarray:
    return _free_energies(forward_batch(head, X), T)
