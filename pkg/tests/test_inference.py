from collections import Counter

import numpy as np
import pytest

from stagebank.energy import ContractError, confidence_score
from stagebank.head import EnergyConfig, StageHead, forward, init_head
from stagebank.inference import (ModelBank, criterion3_check, predict, predict_batch, select_stage,
                                 stage_id_accuracy, stage_votes)


def random_bank(r, S=4, C=3, D=5, omega=None):
    heads = [init_head(s + 1, range(s * C, (s + 1) * C), D, r) for s in range(S)]
    for h in heads:
        h.weights *= 4.0
        h.bias += r.normal(0, 1, h.bias.shape)
    if omega is None:
        omega = list(r.choice([0.001, 0.05, 0.3, 1.0], size=r.integers(0, 6)))
    return ModelBank(heads, omega)


def oracle_predict(x, bank):
    temps = bank.omega or [1.0]
    conf = {T: [confidence_score(forward(h, x), T) for h in bank.heads] for T in temps}
    votes = [int(np.argmax(conf[T])) + 1 for T in temps]
    tally = Counter(votes)
    top = max(tally.values())
    conf1 = [confidence_score(forward(h, x), 1.0) for h in bank.heads]
    tied = [s for s in tally if tally[s] == top]
    stage = min(tied, key=lambda s: (-conf1[s - 1], s))
    head = bank.heads[stage - 1]
    return stage, head.label_set[int(np.argmax(forward(head, x)))]


def oracle_select(votes, conf=None):
    counts = {}
    for _, s in votes:
        counts[s] = counts.get(s, 0) + 1
    best = None
    for s in sorted(counts):
        key = (counts[s], conf[s] if conf else 0.0)
        if best is None or key > best[0]:
            best = (key, s)
    return best[1]


def test_select_stage_examples():
    assert select_stage([(0.1, 2), (0.2, 2), (0.3, 1)]) == 2
    assert select_stage([(0.1, 3), (0.2, 1)]) == 1
    assert select_stage([(0.1, 3), (0.2, 1)], {1: 0.5, 3: 0.9}) == 3
    assert select_stage([(1.0, 4)]) == 4
    with pytest.raises(ContractError):
        select_stage([])


def test_select_stage_against_oracle():
    r = np.random.default_rng(0)
    for _ in range(1000):
        S = int(r.integers(1, 6))
        votes = [(0.001 * (i + 1), int(r.integers(1, S + 1))) for i in range(r.integers(1, 12))]
        conf = {s: float(r.choice([0.0, 1.0, 2.0])) for s in range(1, S + 1)} if r.random() < 0.5 else None
        assert select_stage(votes, conf) == oracle_select(votes, conf)


def test_predict_matches_brute_force():
    r = np.random.default_rng(1)
    for _ in range(20):
        bank = random_bank(r)
        for x in r.normal(0, 1, (10, 5)):
            res = predict(x, bank)
            assert (res.chosen_stage, res.chosen_class) == oracle_predict(x, bank)
            assert len(res.votes) == len(bank.temperatures())


def test_predict_batch_matches_predict():
    r = np.random.default_rng(2)
    for _ in range(10):
        bank = random_bank(r)
        X = r.normal(0, 1, (40, 5))
        stages, classes = predict_batch(bank, X)
        for i, x in enumerate(X):
            res = predict(x, bank)
            assert (stages[i], classes[i]) == (res.chosen_stage, res.chosen_class)


def test_identical_heads_tie_to_first_stage():
    w = np.ones((2, 3))
    heads = [StageHead(1, [0, 1], w, np.zeros(2)), StageHead(2, [2, 3], w, np.zeros(2))]
    res = predict(np.ones(3), ModelBank(heads, [0.5, 1.0]))
    assert res.chosen_stage == 1 and res.chosen_class == 0


def test_single_head_bank():
    r = np.random.default_rng(3)
    bank = ModelBank([init_head(1, [4, 5, 6], 3, r)])
    x = r.normal(size=3)
    assert predict(x, bank).chosen_stage == 1
    assert stage_votes(x, bank) == [(1.0, 1)]
    assert criterion3_check(r.normal(size=(5, 3)), [1] * 5, bank) == 1.0


def test_bank_validation():
    r = np.random.default_rng(4)
    a = init_head(1, [0, 1], 3, r)
    b = init_head(2, [1, 2], 3, r)
    with pytest.raises(ContractError):
        ModelBank([a, b])  # overlapping labels in cil
    ModelBank([a, init_head(2, [0, 1], 3, r)], mode="dil")
    with pytest.raises(ContractError):
        ModelBank([a, b], mode="dil")
    with pytest.raises(ContractError):
        ModelBank([b])  # stage id 2 at position 0
    with pytest.raises(ContractError):
        ModelBank([a, init_head(2, [5], 4, r)])
    with pytest.raises(ContractError):
        ModelBank([a], mode="til")


def test_stage_id_accuracy_and_criterion3_brute_force():
    r = np.random.default_rng(5)
    bank = random_bank(r, omega=[])
    X = r.normal(0, 1, (60, 5))
    true = r.integers(1, 5, 60)
    conf = np.array([[confidence_score(forward(h, x)) for h in bank.heads] for x in X])
    assert stage_id_accuracy(X, true, bank.heads) == pytest.approx(np.mean(conf.argmax(1) + 1 == true))
    strict = [all(conf[i, true[i] - 1] > conf[i, j] for j in range(4) if j != true[i] - 1)
              for i in range(60)]
    assert criterion3_check(X, true, bank) == pytest.approx(np.mean(strict))


def test_empty_omega_votes_at_unit_temperature():
    r = np.random.default_rng(6)
    bank = random_bank(r, omega=[])
    assert bank.temperatures() == [1.0]
    bank = ModelBank(bank.heads, [0.2, 0.2], EnergyConfig())
    assert bank.temperatures() == [0.2, 0.2]
