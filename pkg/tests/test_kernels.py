import numpy as np
import pytest

from stagebank import _kernels_py, kernels
from stagebank.energy import confidence_score

try:
    from stagebank import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

needs_ext = pytest.mark.skipif(_kernels_c is None, reason="compiled extension not built")


def packed(r, S, N, cmax):
    counts = r.integers(1, cmax + 1, S)
    logits = r.normal(0, 4, (S, N, cmax))
    # junk in the padding must be ignored
    for s in range(S):
        logits[s, :, counts[s]:] = 1e6
    return logits, counts


def brute_confidences(logits, counts, T):
    S, N, _ = logits.shape
    return np.array([[confidence_score(logits[s, n, :counts[s]], T) for n in range(N)] for s in range(S)])


def brute_winners(logits, counts, temps):
    out = []
    for T in temps:
        c = brute_confidences(logits, counts, T)
        out.append([max(range(c.shape[0]), key=lambda s: (c[s, n], -s)) for n in range(c.shape[1])])
    return np.array(out)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("impl", [_kernels_py, pytest.param(_kernels_c, marks=needs_ext)],
                         ids=["python", "cython"])
def test_confidences_against_scalar_reference(impl):
    r = np.random.default_rng(0)
    logits, counts = packed(r, 4, 30, 6)
    for T in (0.001, 0.37, 1.0, 3.0):
        np.testing.assert_allclose(impl.confidences(logits, counts, T),
                                   brute_confidences(logits, counts, T), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("impl", [_kernels_py, pytest.param(_kernels_c, marks=needs_ext)],
                         ids=["python", "cython"])
def test_winners_against_scalar_reference(impl):
    r = np.random.default_rng(1)
    logits, counts = packed(r, 5, 40, 4)
    temps = np.array([0.001, 0.01, 0.5, 1.0])
    np.testing.assert_array_equal(impl.stage_winners(logits, counts, temps),
                                  brute_winners(logits, counts, temps))


@pytest.mark.parametrize("impl", [_kernels_py, pytest.param(_kernels_c, marks=needs_ext)],
                         ids=["python", "cython"])
def test_winner_ties_go_to_lowest_stage(impl):
    logits = np.zeros((3, 2, 2))
    counts = np.array([2, 2, 2])
    np.testing.assert_array_equal(impl.stage_winners(logits, counts, np.array([1.0, 0.5])), 0)


@needs_ext
def test_backends_agree_on_large_sweep():
    r = np.random.default_rng(2)
    logits, counts = packed(r, 5, 200, 10)
    temps = np.round(0.001 * np.arange(1, 1001), 12)
    a = _kernels_py.stage_winners(logits, counts, temps)
    b = _kernels_c.stage_winners(logits, counts, temps)
    np.testing.assert_array_equal(a, b)
    x = r.normal(0, 30, (50, 7))
    np.testing.assert_allclose(_kernels_py.row_logsumexp(x), _kernels_c.row_logsumexp(x), rtol=1e-14)


def test_pure_python_switch(monkeypatch):
    import importlib
    monkeypatch.setenv("STAGEBANK_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.stage_winners is _kernels_py.stage_winners
    finally:
        monkeypatch.delenv("STAGEBANK_PURE_PYTHON")
        importlib.reload(kernels)
