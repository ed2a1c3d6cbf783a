import numpy as np
import pytest

from stagebank.energy import ContractError
from stagebank.energy import confidence_score
from stagebank.metrics import ff
from stagebank.head import EnergyConfig, forward, free_energies, init_head, total_loss
from stagebank.trainer import (DivergenceError, OptimizerConfig, TemperaturePools, calibrate_temperature,
                               candidate_temperatures, cosine_lr, run_stream, temperature_accuracies,
                               train_stage)


def test_candidate_grid():
    c = candidate_temperatures()
    assert c.size == 1000 and c[0] == 0.001 and c[-1] == 1.0
    assert 0.5 in c and np.all(np.diff(c) > 0)
    np.testing.assert_array_equal(candidate_temperatures(0.1, 0.3, 0.1), [0.1, 0.2, 0.3])
    with pytest.raises(ContractError):
        candidate_temperatures(0.0, 1.0, 0.1)


def test_cosine_schedule():
    assert cosine_lr(0.01, 0, 10) == 0.01
    assert cosine_lr(0.01, 5, 10) == pytest.approx(0.005)
    assert cosine_lr(0.01, 10, 10) == pytest.approx(0.0, abs=1e-18)


def test_optimizer_defaults():
    o = OptimizerConfig()
    assert (o.learning_rate, o.momentum, o.weight_decay, o.batch_size) == (0.01, 0.9, 0.0005, 128)
    with pytest.raises(ContractError):
        OptimizerConfig(momentum=1.0)


def test_train_stage_reduces_loss_and_leaves_input(tiny_stream, fast_opt, cfg):
    st = tiny_stream[0]
    head = init_head(1, st.label_set, st.feature_dim, np.random.default_rng(0))
    before = head.weights.copy()
    trained, trace = train_stage(st, head, cfg, fast_opt)
    np.testing.assert_array_equal(head.weights, before)
    y = [head.local_index(v) for v in st.train_y]
    assert total_loss(trained, (st.train_x, y), cfg) < total_loss(head, (st.train_x, y), cfg)
    assert len(trace) == fast_opt.epochs and trace[-1] < trace[0]


def test_train_stage_is_deterministic(tiny_stream, fast_opt, cfg):
    st = tiny_stream[1]
    h = init_head(2, st.label_set, st.feature_dim, np.random.default_rng(0))
    a, _ = train_stage(st, h, cfg, fast_opt)
    b, _ = train_stage(st, h, cfg, fast_opt)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_zero_epochs_is_identity(tiny_stream, cfg):
    st = tiny_stream[0]
    h = init_head(1, st.label_set, st.feature_dim, np.random.default_rng(0))
    out, trace = train_stage(st, h, cfg, OptimizerConfig(epochs=0))
    np.testing.assert_array_equal(out.weights, h.weights)
    assert trace == []


def test_divergence_is_reported(tiny_stream):
    st = tiny_stream[0]
    h = init_head(1, st.label_set, st.feature_dim, np.random.default_rng(0))
    cfg = EnergyConfig(anchor=-1e3, lam=1e3)
    with pytest.raises(DivergenceError) as info:
        with np.errstate(all="ignore"):
            train_stage(st, h, cfg, OptimizerConfig(learning_rate=1e3, epochs=200, cosine=False))
    assert info.value.stage_id == 1


def brute_calibration(X, heads, candidates):
    best_t, best_acc = None, -1.0
    for t in candidates:
        hits = 0
        for x in X:
            conf = [confidence_score(forward(h, x), t) for h in heads]
            hits += int(np.argmax(conf)) == len(heads) - 1
        acc = hits / len(X)
        if acc > best_acc:
            best_t, best_acc = t, acc
    return best_t, best_acc


def test_calibration_matches_brute_force():
    r = np.random.default_rng(8)
    for _ in range(5):
        heads = [init_head(s + 1, range(3 * s, 3 * s + 3), 4, r) for s in range(3)]
        for h in heads:
            h.bias += r.normal(0, 2, 3)
        X = r.normal(0, 2, (25, 4))
        cands = candidate_temperatures(0.05, 1.0, 0.05)
        pools, chosen = calibrate_temperature(X, heads, TemperaturePools(cands, [0.3]))
        t_ref, acc_ref = brute_calibration(X, heads, cands)
        assert chosen == pytest.approx(t_ref) and pools.selected == [0.3, chosen]
        assert temperature_accuracies(X, heads, cands).max() == pytest.approx(acc_ref)


def test_calibration_needs_two_heads():
    r = np.random.default_rng(0)
    pools = TemperaturePools(candidate_temperatures(0.5, 1.0, 0.5))
    assert calibrate_temperature(r.normal(size=(3, 2)), [init_head(1, [0], 2, r)], pools) == (pools, None)


def test_calibration_ties_pick_smallest_temperature():
    # two heads with identical logits: the last head never wins, so every t ties at accuracy 0
    r = np.random.default_rng(0)
    a = init_head(1, [0, 1], 3, r)
    b = a.copy()
    b.stage_id, b.label_set = 2, (2, 3)
    b.__post_init__()
    cands = candidate_temperatures(0.1, 1.0, 0.1)
    _, chosen = calibrate_temperature(r.normal(size=(5, 3)), [a, b], TemperaturePools(cands))
    assert chosen == 0.1


def test_pools_reject_bad_candidates():
    with pytest.raises(ContractError):
        TemperaturePools(np.array([0.5, 0.2]))
    with pytest.raises(ContractError):
        TemperaturePools(np.array([]))


def test_run_stream_shapes(tiny_stream, fast_opt, cfg):
    res = run_stream(tiny_stream, cfg, fast_opt, candidates=candidate_temperatures(0.1, 1.0, 0.1))
    assert res.bank.num_stages == 3
    assert len(res.bank.omega) == 2
    assert set(res.calibration) == {2, 3}
    rows = res.matrix.to_rows()
    assert [len(r) for r in rows] == [1, 2, 3]
    for info in res.calibration.values():
        assert info["accuracy_at_1"] is not None and info["accuracy"] >= info["accuracy_at_1"]


def test_run_stream_single_stage(tiny_stream, fast_opt, cfg):
    res = run_stream(tiny_stream[:1], cfg, fast_opt)
    assert res.bank.omega == [] and res.calibration == {}


def test_disable_calibration_keeps_omega_empty(tiny_stream, fast_opt, cfg):
    res = run_stream(tiny_stream, cfg, fast_opt, calibrate=False)
    assert res.bank.omega == []


def test_shared_head_grows(tiny_stream, fast_opt, cfg):
    res = run_stream(tiny_stream, cfg, fast_opt, shared_head=True)
    assert res.bank.num_stages == 1 and res.bank.heads[0].num_classes == 9


def test_stage_order_enforced(tiny_stream, fast_opt, cfg):
    with pytest.raises(ContractError):
        run_stream([tiny_stream[1]], cfg, fast_opt)


def test_resume_matches_uninterrupted(tiny_stream, fast_opt, cfg):
    saved = {}
    full = run_stream(tiny_stream, cfg, fast_opt, candidates=candidate_temperatures(0.1, 1.0, 0.1),
                      on_stage_end=lambda sid, bank: saved.setdefault(sid, bank))
    resumed = run_stream(tiny_stream, cfg, fast_opt, candidates=candidate_temperatures(0.1, 1.0, 0.1),
                         start=saved[2])
    assert resumed.bank.omega == full.bank.omega
    for a, b in zip(resumed.bank.heads, full.bank.heads):
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)
    assert resumed.matrix.to_rows()[-1] == full.matrix.to_rows()[-1]


def test_free_energy_pulled_toward_anchor(tiny_stream, cfg):
    opt = OptimizerConfig(epochs=30, batch_size=16)
    res = run_stream(tiny_stream, cfg, opt)
    for h, st in zip(res.bank.heads, tiny_stream):
        assert abs(free_energies(h, st.train_x).mean() - cfg.anchor) < 1.0


def test_shared_head_forgets_more_than_isolated_heads(tiny_stream, cfg):
    opt = OptimizerConfig(epochs=15, batch_size=16)
    isolated = run_stream(tiny_stream, cfg, opt)
    shared = run_stream(tiny_stream, cfg, opt, shared_head=True)
    assert ff(shared.matrix) > ff(isolated.matrix)
