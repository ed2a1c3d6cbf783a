"""Central finite-difference check of the analytic head gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .head import LINEAR, MLP, EnergyConfig, gradients, init_head, total_loss

STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


@dataclass
class GradcheckResult:
    instances: int
    max_rel_error: float
    failures: int

    @property
    def ok(self):
        return self.failures == 0


def numeric_gradients(head, batch, cfg, step=STEP):
    out = {}
    for name, p in head.parameters().items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = total_loss(head, batch, cfg)
            flat[i] = orig - step
            down = total_loss(head, batch, cfg)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def compare(analytic, numeric):
    """``(max relative error, number of entries outside tolerance)``."""
    worst, bad = 0.0, 0
    for name, a in analytic.items():
        n = numeric[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        bad += int(np.sum(diff > np.maximum(REL_TOL * scale, ABS_FLOOR)))
        # below ABS_FLOOR / REL_TOL the absolute floor governs; scale errors accordingly
        rel = diff / np.maximum(scale, ABS_FLOOR / REL_TOL)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst, bad


def random_instance(rng, lam):
    D = int(rng.integers(1, 17))
    C = int(rng.integers(1, 9))
    n = int(rng.integers(1, 9))
    variant = MLP if rng.random() < 0.3 else LINEAR
    head = init_head(1, range(C), D, rng, variant, hidden=int(rng.integers(2, 9)))
    for p in head.parameters().values():
        p += rng.normal(0, 0.5, p.shape)
    X = rng.normal(0, 1.5, (n, D))
    y = rng.integers(0, C, n)
    cfg = EnergyConfig(anchor=float(rng.uniform(-15, 0)), lam=lam)
    return head, (X, y), cfg


def run_gradcheck(instances=100, seed=0, lambdas=(0.0, 0.1, 1.0)) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    worst, failures = 0.0, 0
    for k in range(instances):
        head, batch, cfg = random_instance(rng, lambdas[k % len(lambdas)])
        w, bad = compare(gradients(head, batch, cfg), numeric_gradients(head, batch, cfg))
        worst = max(worst, w)
        failures += bad
    return GradcheckResult(instances, worst, failures)
