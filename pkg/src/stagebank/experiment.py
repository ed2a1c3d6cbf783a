"""Full runs, component ablations and anchor sweeps over several seeds.

The stream is generated (or loaded) once; seeds only change head
initialization and batch order. Seeds run on a thread pool whose size is
read from ``STAGEBANK_THREADS`` (default 1); results are collected in seed
order, so reports do not depend on the pool size.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .bankio import save_bank
from .config import ExperimentConfig
from .data import generate_stream, read_manifest, validate_stream
from .inference import criterion3_check
from .metrics import faa, ff
from .report import summarize, write_matrix_csv, write_report
from .trainer import DivergenceError, run_stream

log = logging.getLogger(__name__)

ABLATIONS = ("full", "disable_anchor_loss", "disable_calibration", "shared_head")


class ExperimentError(RuntimeError):
    pass


def thread_count():
    raw = os.environ.get("STAGEBANK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ExperimentError(f"STAGEBANK_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def load_stream(cfg: ExperimentConfig):
    """``(mode, stages)`` for the configured source."""
    if cfg.manifest:
        return read_manifest(cfg.manifest)
    stages = generate_stream(cfg.stream)
    return cfg.stream.mode, stages


def variant_config(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    """Apply one named ablation on top of ``cfg``'s own flags."""
    a = cfg.ablation
    if name == "disable_anchor_loss":
        a = replace(a, disable_anchor_loss=True)
    elif name == "disable_calibration":
        a = replace(a, disable_calibration=True)
    elif name == "shared_head":
        a = replace(a, shared_head=True)
    elif name != "full":
        raise ExperimentError(f"unknown ablation {name!r}")
    return replace(cfg, ablation=a)


def run_seed(cfg: ExperimentConfig, mode, stages, seed, bank_path=None):
    """One stream pass; returns ``(run record, StreamResult)``."""
    energy = cfg.energy
    if cfg.ablation.disable_anchor_loss:
        energy = replace(energy, lam=0.0)
    opt = replace(cfg.optimizer, seed=int(seed))
    t0 = time.perf_counter()
    try:
        result = run_stream(stages, energy, opt, mode=mode, candidates=cfg.psi.materialize(),
                            variant=cfg.head, calibrate=not cfg.ablation.disable_calibration,
                            shared_head=cfg.ablation.shared_head)
    except DivergenceError as exc:
        raise ExperimentError(f"seed {seed}: training diverged at stage {exc.stage_id}, "
                              f"epoch {exc.epoch}") from exc
    wall = time.perf_counter() - t0
    if cfg.ablation.shared_head:
        c3 = None
    else:
        X = np.concatenate([st.test_x for st in stages])
        true = np.concatenate([np.full(len(st.test_y), st.stage_id) for st in stages])
        c3 = criterion3_check(X, true, result.bank) if len(X) else None
    if bank_path is not None:
        save_bank(bank_path, result.bank)
    record = {
        "seed": int(seed),
        "faa": faa(result.matrix),
        "ff": ff(result.matrix),
        "accuracy_matrix": result.matrix.to_rows(),
        "omega": list(result.bank.omega),
        "omega_size": len(result.bank.omega),
        "criterion3": c3,
        "calibration": {str(k): v for k, v in result.calibration.items()},
        "wall_time": wall,
    }
    return record, result


def _run_variant(cfg, mode, stages, name, overrides, out_dir):
    def one(seed):
        path = None
        if out_dir is not None:
            path = os.path.join(out_dir, "banks", f"{name}_seed{seed}.esnb")
        record, _ = run_seed(cfg, mode, stages, seed, path)
        log.info("%s seed %d: FAA %.4f FF %.4f", name, seed, record["faa"], record["ff"])
        return record

    workers = min(thread_count(), len(cfg.seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(one, cfg.seeds))
    else:
        runs = [one(s) for s in cfg.seeds]
    return {"name": name, "overrides": overrides, "runs": runs, "summary": summarize(runs)}


def _prepare(cfg, out_dir):
    mode, stages = load_stream(cfg)
    validate_stream(stages, mode)
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "banks"), exist_ok=True)
    return mode, stages


def _finish(report, out_dir):
    if out_dir is not None:
        write_report(os.path.join(out_dir, "report.json"), report)
        write_matrix_csv(os.path.join(out_dir, "accuracy_matrix.csv"), report)
    return report


def _overrides(a):
    return {k: v for k, v in vars(a).items() if v}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    mode, stages = _prepare(cfg, out_dir)
    variant = _run_variant(cfg, mode, stages, "run", _overrides(cfg.ablation), out_dir)
    return _finish({"kind": "run", "config": cfg.echo(), "variants": [variant]}, out_dir)


def ablate_experiment(cfg: ExperimentConfig, out_dir=None, names=ABLATIONS) -> dict:
    mode, stages = _prepare(cfg, out_dir)
    variants = []
    for name in names:
        vcfg = variant_config(cfg, name)
        variants.append(_run_variant(vcfg, mode, stages, name, _overrides(vcfg.ablation), out_dir))
    return _finish({"kind": "ablate", "config": cfg.echo(), "variants": variants}, out_dir)


def sweep_delta(cfg: ExperimentConfig, deltas, out_dir=None) -> dict:
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ExperimentError("sweep needs at least one anchor value")
    mode, stages = _prepare(cfg, out_dir)
    variants = []
    for d in deltas:
        dcfg = replace(cfg, energy=replace(cfg.energy, anchor=d))
        variants.append(_run_variant(dcfg, mode, stages, f"delta={d:g}", {"anchor": d}, out_dir))
    means = [v["summary"]["faa_mean"] for v in variants]
    report = {"kind": "sweep-delta", "config": cfg.echo(), "variants": variants,
              "faa_spread": float(max(means) - min(means))}
    return _finish(report, out_dir)
