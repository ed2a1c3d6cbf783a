import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stagebank.energy import confidence_score, free_energy, gibbs_probabilities
from stagebank.inference import select_stage
from stagebank.metrics import faa, ff

finite = st.floats(-50, 50, allow_nan=False)
temps = st.floats(1e-3, 10.0)
logit_vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


@given(logit_vectors, temps)
def test_free_energy_bounds(z, T):
    F = free_energy(z, T)
    tol = 1e-9 * max(1.0, abs(F))
    assert -z.max() - T * np.log(z.size) - tol <= F <= -z.max() + tol


@given(logit_vectors, temps, finite)
def test_free_energy_shift_equivariance(z, T, c):
    assert abs(free_energy(z + c, T) - (free_energy(z, T) - c)) <= 1e-9 * (1 + abs(c) + abs(z).max())


@given(logit_vectors, st.floats(1e-3, 5.0), st.floats(1.0, 3.0))
def test_confidence_non_decreasing_in_temperature(z, T, k):
    assert confidence_score(z, T * k) >= confidence_score(z, T) - 1e-9 * (1 + abs(z).max())


@given(logit_vectors, temps)
def test_gibbs_is_a_distribution(z, T):
    p = gibbs_probabilities(z, T)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-12


@given(st.lists(st.integers(1, 5), min_size=1, max_size=30))
def test_unanimous_majority_wins(stages):
    votes = [(0.001 * (i + 1), s) for i, s in enumerate(stages)]
    chosen = select_stage(votes)
    counts = {s: stages.count(s) for s in stages}
    assert counts[chosen] == max(counts.values())
    assert chosen == min(s for s in counts if counts[s] == counts[chosen])


@settings(max_examples=50)
@given(st.integers(1, 6), st.data())
def test_metric_ranges(S, data):
    rows = [data.draw(st.lists(st.floats(0, 1), min_size=t + 1, max_size=t + 1)) for t in range(S)]
    assert 0 <= faa(rows) <= 1
    assert -1 <= ff(rows) <= 1
