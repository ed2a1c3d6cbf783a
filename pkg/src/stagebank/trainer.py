"""Stage-by-stage training of isolated heads with cumulative temperature calibration."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .data import CIL, StageDataset
from .energy import ContractError
from .head import LINEAR, EnergyConfig, StageHead, init_head, loss_and_gradients
from .inference import ModelBank, bank_logits, predict_batch
from .kernels import stage_winners
from .metrics import AccuracyMatrix

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, stage_id, epoch, message="loss became non-finite"):
        super().__init__(f"stage {stage_id}, epoch {epoch}: {message}")
        self.stage_id = stage_id
        self.epoch = epoch


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    epochs: int = 30
    batch_size: int = 128
    cosine: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ContractError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")


def candidate_temperatures(t_min=0.001, t_max=1.0, step=0.001) -> np.ndarray:
    """The grid t_min, t_min + step, ..., t_max (inclusive, rounded to 12 decimals)."""
    if not (t_min > 0 and step > 0 and t_max >= t_min):
        raise ContractError("temperature grid needs 0 < min <= max and step > 0")
    n = int(round((t_max - t_min) / step))
    return np.round(t_min + step * np.arange(n + 1), 12)


@dataclass
class TemperaturePools:
    candidates: np.ndarray = field(default_factory=candidate_temperatures)
    selected: List[float] = field(default_factory=list)

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=np.float64)
        if c.ndim != 1 or c.size == 0 or not np.all(c > 0) or np.any(np.diff(c) <= 0):
            raise ContractError("candidate temperatures must be nonempty, positive, strictly increasing")
        self.candidates = c
        self.selected = [float(t) for t in self.selected]


def cosine_lr(base_lr, step, total_steps):
    """Learning rate for step ``step`` in 1..total_steps; reaches 0 on the last step."""
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def stage_rng(seed, stage_id, stream):
    return np.random.default_rng([int(seed), int(stage_id), stream])


def train_stage(stage_data: StageDataset, head: StageHead, cfg: EnergyConfig, opt: OptimizerConfig):
    """SGD with heavy-ball momentum, L2 weight decay and a cosine schedule.

    Only ``stage_data.train_*`` is read. Returns ``(trained_head, epoch_losses)``;
    the input head is not modified.
    """
    X, labels = stage_data.train_x, stage_data.train_y
    if X.shape[0] == 0:
        raise ContractError(f"stage {stage_data.stage_id} has no training data")
    y = np.array([head.local_index(lab) for lab in labels], dtype=np.int64)
    head = head.copy()
    params = head.parameters()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    n = X.shape[0]
    per_epoch = math.ceil(n / opt.batch_size)
    total = per_epoch * opt.epochs
    rng = stage_rng(opt.seed, stage_data.stage_id, 1)
    trace = []
    step = 0
    for epoch in range(1, opt.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, opt.batch_size):
            idx = order[lo:lo + opt.batch_size]
            # overflow is caught below as a non-finite loss
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_gradients(head, (X[idx], y[idx]), cfg)
            if not np.isfinite(loss):
                raise DivergenceError(stage_data.stage_id, epoch)
            step += 1
            lr = cosine_lr(opt.learning_rate, step, total) if opt.cosine else opt.learning_rate
            for k, p in params.items():
                g = grads[k] + opt.weight_decay * p
                v = velocity[k]
                v *= opt.momentum
                v += g
                p -= lr * v
            losses.append(loss * len(idx))
        epoch_loss = float(np.sum(losses) / n)
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(p)) for p in params.values()):
            raise DivergenceError(stage_data.stage_id, epoch)
        trace.append(epoch_loss)
    return head, trace


def calibrate_temperature(X_current, heads, pools: TemperaturePools):
    """Append the stage-ID-accuracy-maximizing temperature to the selected pool.

    ``X_current`` holds the current (last) stage's training features; every head
    is evaluated at the same temperature. Ties go to the smallest temperature.
    Returns ``(pools, chosen)``; with fewer than two heads nothing changes and
    ``chosen`` is None.
    """
    if len(heads) < 2:
        return pools, None
    return _append_best(pools, temperature_accuracies(X_current, heads, pools.candidates))


def _append_best(pools, accs):
    chosen = float(pools.candidates[int(np.argmax(accs))])
    return TemperaturePools(pools.candidates, pools.selected + [chosen]), chosen


def temperature_accuracies(X_current, heads, candidates):
    """Stage-ID accuracy of the last head's own data at each candidate temperature."""
    logits, counts = bank_logits(heads, X_current)
    winners = stage_winners(logits, counts, np.asarray(candidates, dtype=np.float64))
    return np.mean(winners == len(heads) - 1, axis=1)


@dataclass
class StreamResult:
    bank: ModelBank
    matrix: AccuracyMatrix
    traces: dict
    calibration: dict


def _expand_shared(head, new_labels, rng, variant):
    """Grow a shared head's output layer to cover new labels."""
    add = [c for c in new_labels if c not in head.label_set]
    if not add:
        return head
    fan_in = head.weights.shape[1]
    bound = 1.0 / math.sqrt(fan_in)
    w = np.vstack([head.weights, rng.uniform(-bound, bound, (len(add), fan_in))])
    b = np.concatenate([head.bias, np.zeros(len(add))])
    return StageHead(1, head.label_set + tuple(add), w, b, head.hidden_weights, head.hidden_bias)


def run_stream(
    stages: Iterable[StageDataset],
    cfg: EnergyConfig = EnergyConfig(),
    opt: OptimizerConfig = OptimizerConfig(),
    *,
    mode: str = CIL,
    candidates=None,
    variant: str = LINEAR,
    calibrate: bool = True,
    shared_head: bool = False,
    start: Optional[ModelBank] = None,
    on_stage_end=None,
) -> StreamResult:
    """Train stage after stage; fill one accuracy-matrix row per stage.

    Training data of a stage is used only while that stage is current; test
    splits are kept for evaluation. ``start`` resumes from a saved bank whose
    heads cover the first stages of ``stages``. ``on_stage_end(stage_id, bank)``
    is called after each stage.
    """
    stages = iter(stages)
    candidates = candidate_temperatures() if candidates is None else np.asarray(candidates)
    if start is not None and shared_head:
        raise ContractError("resuming is only supported for stage-isolated banks")
    pools = TemperaturePools(candidates, list(start.omega) if start else [])
    heads = [h.copy() for h in start.heads] if start else []
    done = len(heads)
    tests = []
    rows = []
    traces, calib = {}, {}
    expected = 1
    for st in stages:
        if st.stage_id != expected:
            raise ContractError(f"expected stage {expected}, got stage {st.stage_id}")
        expected += 1
        tests.append((st.test_x, st.test_y))
        if st.stage_id <= done:
            continue
        init_rng = stage_rng(opt.seed, st.stage_id, 0)
        if shared_head:
            if heads:
                base = _expand_shared(heads[0], st.label_set, init_rng, variant)
            else:
                base = init_head(1, st.label_set, st.feature_dim, init_rng, variant)
        else:
            base = init_head(st.stage_id, st.label_set, st.feature_dim, init_rng, variant)
        trained, trace = train_stage(st, base, cfg, opt)
        traces[st.stage_id] = trace
        if shared_head:
            heads = [trained]
        else:
            heads.append(trained)
            if calibrate and len(heads) > 1:
                accs = temperature_accuracies(st.train_x, heads, pools.candidates)
                pools, chosen = _append_best(pools, accs)
                at_one = np.flatnonzero(pools.candidates == 1.0)
                calib[st.stage_id] = {
                    "chosen": chosen,
                    "accuracy": float(accs.max()),
                    "accuracy_at_1": float(accs[at_one[0]]) if at_one.size else None,
                }
        bank = ModelBank(list(heads), pools.selected, cfg, mode)
        row = []
        for tx, ty in tests:
            _, pred = predict_batch(bank, tx)
            row.append(float(np.mean(pred == ty)) if len(ty) else float("nan"))
        rows.append((st.stage_id, row))
        log.info("stage %d: accuracies %s", st.stage_id, np.round(row, 4).tolist())
        if on_stage_end is not None:
            on_stage_end(st.stage_id, bank)
        del st
    S = expected - 1
    matrix = AccuracyMatrix(S)
    for sid, row in rows:
        for j, v in enumerate(row):
            if not np.isnan(v):
                matrix.set(sid - 1, j, v)
    bank = ModelBank(heads, pools.selected, cfg, mode)
    return StreamResult(bank, matrix, traces, calib)

