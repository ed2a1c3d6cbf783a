"""Experiment configuration: a JSON file plus command-line overrides.

Recognized keys (all optional)::

    {
      "stream":    {"mode": "cil", "num_stages": 5, "classes_per_stage": 10,
                    "feature_dim": 32, "train_per_class": 100, "test_per_class": 50,
                    "separation": 6.0, "noise": 0.3, "offset": 8.0,
                    "domain_shift": 0.0, "seed": 0}
                   or {"manifest": "path/to/manifest.txt"},
      "energy":    {"anchor": -10.0, "lambda": 0.1},
      "optimizer": {"learning_rate": 0.01, "momentum": 0.9, "weight_decay": 0.0005,
                    "epochs": 30, "batch_size": 128, "cosine": true},
      "psi":       {"min": 0.001, "max": 1.0, "step": 0.001},
      "head":      "linear" | "mlp",
      "seeds":     [0, 1, 2, 3, 4],
      "ablation":  {"disable_anchor_loss": false, "disable_calibration": false,
                    "shared_head": false}
    }

A relative manifest path is resolved against the config file's directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

from .data import MODES, StreamSpec
from .energy import ContractError
from .head import LINEAR, MLP, EnergyConfig
from .trainer import OptimizerConfig, candidate_temperatures

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# pinned synthetic CIL stream; see README
DEFAULT_STREAM = StreamSpec(mode="cil", num_stages=5, classes_per_stage=10, feature_dim=32,
                            train_per_class=100, test_per_class=50, separation=6.0,
                            noise=0.3, offset=8.0, domain_shift=0.0, seed=0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PsiSpec:
    min: float = 0.001
    max: float = 1.0
    step: float = 0.001

    def materialize(self):
        return candidate_temperatures(self.min, self.max, self.step)

    @classmethod
    def parse(cls, text):
        try:
            lo, hi, step = (float(p) for p in text.split(":"))
        except ValueError:
            raise ConfigError(f"--psi expects MIN:MAX:STEP, got {text!r}") from None
        return cls(lo, hi, step)


@dataclass(frozen=True)
class Ablation:
    disable_anchor_loss: bool = False
    disable_calibration: bool = False
    shared_head: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamSpec = DEFAULT_STREAM
    manifest: Optional[str] = None
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    psi: PsiSpec = field(default_factory=PsiSpec)
    head: str = LINEAR
    seeds: tuple = DEFAULT_SEEDS
    ablation: Ablation = field(default_factory=Ablation)

    def echo(self) -> dict:
        """Plain-dict view of every setting, embedded in each report."""
        out = {
            "stream": {"manifest": self.manifest} if self.manifest else asdict(self.stream),
            "energy": {"anchor": self.energy.anchor, "lambda": self.energy.lam,
                       "train_temperature": self.energy.train_temperature},
            "optimizer": {k: v for k, v in asdict(self.optimizer).items() if k != "seed"},
            "psi": asdict(self.psi),
            "head": self.head,
            "seeds": list(self.seeds),
            "ablation": asdict(self.ablation),
        }
        return out


_SECTIONS = {
    "stream": {f for f in StreamSpec.__dataclass_fields__} | {"manifest"},
    "energy": {"anchor", "lambda", "train_temperature"},
    "optimizer": {"learning_rate", "momentum", "weight_decay", "epochs", "batch_size", "cosine"},
    "psi": {"min", "max", "step"},
    "ablation": set(Ablation.__dataclass_fields__),
}


def _check_keys(section, data):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = set(data) - _SECTIONS[section]
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {sorted(unknown)}")


def from_dict(data: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"head", "seeds"}
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    cfg = ExperimentConfig()
    try:
        if "stream" in data:
            s = dict(data["stream"])
            _check_keys("stream", s)
            if "manifest" in s:
                if len(s) > 1:
                    raise ConfigError("stream: 'manifest' cannot be combined with synthetic fields")
                path = s["manifest"]
                if not os.path.isabs(path):
                    path = os.path.normpath(os.path.join(base_dir, path))
                cfg = replace(cfg, manifest=path)
            else:
                if "mode" in s and s["mode"] not in MODES:
                    raise ConfigError(f"stream.mode: must be one of {list(MODES)}")
                cfg = replace(cfg, stream=replace(DEFAULT_STREAM, **s))
        if "energy" in data:
            e = data["energy"]
            _check_keys("energy", e)
            cfg = replace(cfg, energy=EnergyConfig(
                anchor=float(e.get("anchor", cfg.energy.anchor)),
                lam=float(e.get("lambda", cfg.energy.lam)),
                train_temperature=float(e.get("train_temperature", cfg.energy.train_temperature))))
        if "optimizer" in data:
            _check_keys("optimizer", data["optimizer"])
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, **data["optimizer"]))
        if "psi" in data:
            _check_keys("psi", data["psi"])
            cfg = replace(cfg, psi=replace(cfg.psi, **{k: float(v) for k, v in data["psi"].items()}))
            cfg.psi.materialize()
        if "head" in data:
            if data["head"] not in (LINEAR, MLP):
                raise ConfigError(f"head: must be {LINEAR!r} or {MLP!r}")
            cfg = replace(cfg, head=data["head"])
        if "seeds" in data:
            seeds = data["seeds"]
            if not isinstance(seeds, list) or not seeds or not all(isinstance(x, int) for x in seeds):
                raise ConfigError("seeds: expected a nonempty list of integers")
            cfg = replace(cfg, seeds=tuple(seeds))
        if "ablation" in data:
            _check_keys("ablation", data["ablation"])
            cfg = replace(cfg, ablation=replace(cfg.ablation, **data["ablation"]))
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return from_dict(data, os.path.dirname(os.path.abspath(path)))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def apply_overrides(cfg: ExperimentConfig, *, seeds: Optional[List[int]] = None, delta=None,
                    lam=None, epochs=None, batch=None, psi=None, mode=None, head=None,
                    disable_anchor_loss=False, disable_calibration=False,
                    shared_head=False) -> ExperimentConfig:
    """Command-line flags win over file values."""
    try:
        if seeds:
            cfg = replace(cfg, seeds=tuple(seeds))
        if delta is not None or lam is not None:
            cfg = replace(cfg, energy=replace(
                cfg.energy,
                anchor=cfg.energy.anchor if delta is None else float(delta),
                lam=cfg.energy.lam if lam is None else float(lam)))
        if epochs is not None:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, epochs=int(epochs)))
        if batch is not None:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, batch_size=int(batch)))
        if psi is not None:
            cfg = replace(cfg, psi=PsiSpec.parse(psi) if isinstance(psi, str) else psi)
            cfg.psi.materialize()
        if mode is not None:
            if cfg.manifest:
                raise ConfigError("--mode applies to synthetic streams only")
            cfg = replace(cfg, stream=replace(cfg.stream, mode=mode))
        if head is not None:
            cfg = replace(cfg, head=head)
        if disable_anchor_loss or disable_calibration or shared_head:
            a = cfg.ablation
            cfg = replace(cfg, ablation=Ablation(
                a.disable_anchor_loss or disable_anchor_loss,
                a.disable_calibration or disable_calibration,
                a.shared_head or shared_head))
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    return cfg
