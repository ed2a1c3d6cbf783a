"""Final average accuracy and final forgetting over a stage accuracy matrix."""
from __future__ import annotations

import numpy as np

from .energy import ContractError


class AccuracyMatrix:
    """Lower-triangular table; ``a[t, j]`` is stage-j test accuracy after training stage t.

    Indices are 0-based here. Entries above the diagonal are NaN.
    """

    def __init__(self, num_stages):
        self.a = np.full((num_stages, num_stages), np.nan)

    @classmethod
    def from_rows(cls, rows):
        rows = [list(r) for r in rows]
        m = cls(len(rows))
        for t, row in enumerate(rows):
            for j, v in enumerate(row):
                if v is not None and not (isinstance(v, float) and np.isnan(v)):
                    m.set(t, j, v)
        return m

    @property
    def num_stages(self):
        return self.a.shape[0]

    def set(self, t, j, value):
        if j > t:
            raise ContractError(f"entry ({t}, {j}) is above the diagonal")
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"accuracy must lie in [0, 1], got {value}")
        self.a[t, j] = value

    def row(self, t):
        return self.a[t, : t + 1]

    def to_rows(self):
        """Ragged list form: row t has t + 1 entries."""
        return [self.row(t).tolist() for t in range(self.num_stages)]


def _as_matrix(m):
    return m if isinstance(m, AccuracyMatrix) else AccuracyMatrix.from_rows(m)


def faa(m) -> float:
    """Mean accuracy over all stages after the final stage."""
    m = _as_matrix(m)
    if m.num_stages == 0:
        raise ContractError("empty accuracy matrix")
    last = m.row(m.num_stages - 1)
    if np.isnan(last).any():
        raise ContractError("final row of the accuracy matrix is incomplete")
    return float(np.mean(last))


def ff(m) -> float:
    """Mean over stages 1..S-1 of best earlier accuracy minus final accuracy."""
    m = _as_matrix(m)
    S = m.num_stages
    if S <= 1:
        return 0.0
    tri = m.a[np.tril_indices(S)]
    if np.isnan(tri).any():
        raise ContractError("accuracy matrix is not lower-triangular complete")
    drops = [m.a[j:S - 1, j].max() - m.a[S - 1, j] for j in range(S - 1)]
    return float(np.mean(drops))
