"""Report records shared by run, ablate and sweep-delta, and their schema.

Every report is one JSON object::

    {"kind": "run" | "ablate" | "sweep-delta",
     "config": {...},                     # full settings echo
     "variants": [{"name": ..., "overrides": {...},
                   "runs": [{"seed", "faa", "ff", "accuracy_matrix", "omega",
                             "omega_size", "criterion3", "calibration", "wall_time"}, ...],
                   "summary": {"n_seeds", "faa_mean", "faa_std", "ff_mean", "ff_std"}}],
     "faa_spread": float}                 # sweep-delta only: max - min of faa_mean

Standard deviations use the population form (0 for a single seed).
"""
from __future__ import annotations

import csv
import json

import jsonschema
import numpy as np

_NUM = {"type": "number"}
_NULLABLE_NUM = {"type": ["number", "null"]}

RUN_SCHEMA = {
    "type": "object",
    "required": ["seed", "faa", "ff", "accuracy_matrix", "omega", "omega_size",
                 "criterion3", "calibration", "wall_time"],
    "properties": {
        "seed": {"type": "integer"},
        "faa": _NUM,
        "ff": _NUM,
        "accuracy_matrix": {"type": "array", "items": {"type": "array", "items": _NULLABLE_NUM}},
        "omega": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "omega_size": {"type": "integer", "minimum": 0},
        "criterion3": _NULLABLE_NUM,
        "calibration": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["chosen", "accuracy", "accuracy_at_1"],
            "properties": {"chosen": _NUM, "accuracy": _NUM, "accuracy_at_1": _NULLABLE_NUM}}},
        "wall_time": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind", "config", "variants"],
    "properties": {
        "kind": {"enum": ["run", "ablate", "sweep-delta"]},
        "config": {"type": "object"},
        "variants": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "required": ["name", "overrides", "runs", "summary"],
            "properties": {
                "name": {"type": "string"},
                "overrides": {"type": "object"},
                "runs": {"type": "array", "minItems": 1, "items": RUN_SCHEMA},
                "summary": {
                    "type": "object",
                    "required": ["n_seeds", "faa_mean", "faa_std", "ff_mean", "ff_std"],
                    "properties": {"n_seeds": {"type": "integer", "minimum": 1},
                                   "faa_mean": _NUM, "faa_std": {"type": "number", "minimum": 0},
                                   "ff_mean": _NUM, "ff_std": {"type": "number", "minimum": 0}},
                },
            },
        }},
        "faa_spread": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}


def summarize(runs):
    faa = np.array([r["faa"] for r in runs], dtype=np.float64)
    ff = np.array([r["ff"] for r in runs], dtype=np.float64)
    return {"n_seeds": len(runs),
            "faa_mean": float(faa.mean()), "faa_std": float(faa.std()),
            "ff_mean": float(ff.mean()), "ff_std": float(ff.std())}


def validate_report(report):
    """Raise ``jsonschema.ValidationError`` if ``report`` does not follow the schema."""
    jsonschema.validate(report, REPORT_SCHEMA)
    if report["kind"] == "sweep-delta" and "faa_spread" not in report:
        raise jsonschema.ValidationError("sweep-delta report needs faa_spread")


def strip_timing(report):
    """Copy of a report without wall times, for determinism comparisons."""
    out = json.loads(json.dumps(report))
    for v in out["variants"]:
        for r in v["runs"]:
            r.pop("wall_time", None)
    return out


def dumps_report(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(path, report):
    validate_report(report)
    with open(path, "w") as fh:
        fh.write(dumps_report(report))


def write_matrix_csv(path, report):
    """Long-format accuracy matrices: variant, seed, after_stage, eval_stage, accuracy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "after_stage", "eval_stage", "accuracy"])
        for v in report["variants"]:
            for r in v["runs"]:
                for i, row in enumerate(r["accuracy_matrix"]):
                    for j, a in enumerate(row):
                        if a is not None:
                            w.writerow([v["name"], r["seed"], i + 1, j + 1, repr(a)])
