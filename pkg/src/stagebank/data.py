"""Stage datasets: synthetic stream generation and the ESNF embedding format.

ESNF layout (little-endian, no padding)::

    offset 0   4s   magic b"ESNF"
    offset 4   u32  version (1)
    offset 8   u32  feature dimension D
    offset 12  u64  record count N
    offset 20  N records of: u16 stage_id, u32 label, D x f32 features

A manifest is a plain-text file::

    # comment
    mode cil
    stage 1 stage1_train.esnf stage1_test.esnf [domain_tag]
    stage 2 ...

Relative paths are resolved against the manifest's directory.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import List

import numpy as np

from .energy import ContractError

MAGIC = b"ESNF"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")
RECORD_PREFIX = 6  # u16 stage + u32 label

CIL, DIL, XDCIL = "cil", "dil", "xdcil"
MODES = (CIL, DIL, XDCIL)


class EmbeddingFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class FeatureRecord:
    stage_id: int
    label: int
    features: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (self.stage_id == other.stage_id and self.label == other.label
                and self.features.dtype == other.features.dtype
                and np.array_equal(self.features, other.features))

    __hash__ = None


@dataclass
class StageDataset:
    """One stage's data. Features are stored as (N, D) float64 matrices."""

    stage_id: int
    label_set: tuple
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    domain_tag: int = 0

    def __post_init__(self):
        self.label_set = tuple(int(c) for c in self.label_set)
        allowed = set(self.label_set)
        for split in ("train", "test"):
            x = np.asarray(getattr(self, f"{split}_x"), dtype=np.float64)
            y = np.asarray(getattr(self, f"{split}_y"), dtype=np.int64)
            if x.ndim != 2 or y.shape != (x.shape[0],):
                raise ContractError(f"stage {self.stage_id} {split}: features/labels shape mismatch")
            if not np.all(np.isfinite(x)):
                raise ContractError(f"stage {self.stage_id} {split}: non-finite features")
            bad = set(np.unique(y).tolist()) - allowed
            if bad:
                raise ContractError(f"stage {self.stage_id} {split}: labels {sorted(bad)} outside label set")
            setattr(self, f"{split}_x", x)
            setattr(self, f"{split}_y", y)
        if self.train_x.shape[1] != self.test_x.shape[1] and len(self.test_x):
            raise ContractError(f"stage {self.stage_id}: train/test feature dimensions differ")

    @property
    def feature_dim(self) -> int:
        return self.train_x.shape[1]

    def records(self, split="train") -> List[FeatureRecord]:
        x, y = getattr(self, f"{split}_x"), getattr(self, f"{split}_y")
        return [FeatureRecord(self.stage_id, int(lab), row.copy()) for row, lab in zip(x, y)]


@dataclass(frozen=True)
class StreamSpec:
    mode: str = CIL
    num_stages: int = 5
    classes_per_stage: int = 10
    feature_dim: int = 32
    train_per_class: int = 100
    test_per_class: int = 50
    separation: float = 4.0
    domain_shift: float = 0.0
    noise: float = 0.4
    offset: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("num_stages", "classes_per_stage", "feature_dim", "train_per_class", "test_per_class"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")
        if not self.separation > 0:
            raise ContractError("separation must be > 0")
        if not self.noise > 0:
            raise ContractError("noise must be > 0")
        if self.domain_shift < 0:
            raise ContractError("domain_shift must be >= 0")
        if self.offset < 0:
            raise ContractError("offset must be >= 0")


def _sphere(rng, n, dim, radius):
    v = rng.standard_normal((n, dim))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_stream(spec: StreamSpec) -> List[StageDataset]:
    """Gaussian class clusters arranged into an incremental stream.

    Class means lie on a sphere of radius ``separation``. In ``dil`` and
    ``xdcil`` every stage is a separate domain whose samples are translated
    by a stage-specific vector of norm ``domain_shift``. ``cil`` and
    ``xdcil`` give each stage its own classes; ``dil`` reuses one class set.
    Every sample also carries one shared mean vector of norm ``offset``, as
    embeddings from a single backbone do.
    Features are rounded to float32 so they survive an ESNF round trip.
    """
    rng = np.random.default_rng(spec.seed)
    S, cps, D = spec.num_stages, spec.classes_per_stage, spec.feature_dim
    n_classes = cps if spec.mode == DIL else S * cps
    means = _sphere(rng, n_classes, D, spec.separation)
    if spec.mode == CIL or spec.domain_shift == 0:
        shifts = np.zeros((S, D))
    else:
        shifts = _sphere(rng, S, D, spec.domain_shift)
    shifts = shifts + (_sphere(rng, 1, D, spec.offset) if spec.offset > 0 else 0.0)

    stages = []
    for s in range(S):
        labels = list(range(cps)) if spec.mode == DIL else list(range(s * cps, (s + 1) * cps))
        split = {}
        for name, per_class in (("train", spec.train_per_class), ("test", spec.test_per_class)):
            xs, ys = [], []
            for c in labels:
                xs.append(means[c] + shifts[s] + spec.noise * rng.standard_normal((per_class, D)))
                ys.append(np.full(per_class, c))
            x = np.concatenate(xs).astype(np.float32).astype(np.float64)
            split[name] = (x, np.concatenate(ys))
        stages.append(StageDataset(
            stage_id=s + 1, label_set=tuple(labels),
            train_x=split["train"][0], train_y=split["train"][1],
            test_x=split["test"][0], test_y=split["test"][1],
            domain_tag=0 if spec.mode == CIL else s,
        ))
    validate_stream(stages, spec.mode)
    return stages


def validate_stream(stages, mode):
    """Check stage ordering and the label-set relation required by ``mode``."""
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    for i, st in enumerate(stages):
        if st.stage_id != i + 1:
            raise ContractError(f"stage ids must run 1..S in order; position {i} has id {st.stage_id}")
    dims = {st.feature_dim for st in stages}
    if len(dims) > 1:
        raise ContractError(f"stages disagree on feature dimension: {sorted(dims)}")
    if mode == DIL:
        first = set(stages[0].label_set) if stages else set()
        for st in stages[1:]:
            if set(st.label_set) != first:
                raise ContractError(f"dil stream: stage {st.stage_id} label set differs from stage 1")
    else:
        seen = set()
        for st in stages:
            overlap = seen & set(st.label_set)
            if overlap:
                raise ContractError(f"{mode} stream: stage {st.stage_id} repeats labels {sorted(overlap)}")
            seen |= set(st.label_set)


# --- ESNF ---------------------------------------------------------------

def _record_dtype(dim):
    return np.dtype([("stage", "<u2"), ("label", "<u4"), ("x", "<f4", (dim,))])


def write_embeddings_arrays(path, stage_ids, labels, features):
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ContractError("features must be a (N, D) matrix with D >= 1")
    n, dim = x.shape
    if not np.all(np.isfinite(x)):
        raise ContractError("features must be finite")
    stage_ids = np.broadcast_to(np.asarray(stage_ids), (n,))
    labels = np.broadcast_to(np.asarray(labels), (n,))
    if n and (stage_ids.min() < 1 or stage_ids.max() > 0xFFFF):
        raise ContractError("stage ids must fit in 1..65535")
    if n and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise ContractError("labels must fit in an unsigned 32-bit integer")
    rec = np.empty(n, dtype=_record_dtype(dim))
    rec["stage"] = stage_ids
    rec["label"] = labels
    rec["x"] = x
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, dim, n))
        fh.write(rec.tobytes())


def write_embeddings(path, records, dim=None):
    """Write FeatureRecords; ``dim`` is only needed for an empty file."""
    records = list(records)
    if not records:
        if dim is None:
            raise ContractError("writing zero records needs an explicit dimension")
        return write_embeddings_arrays(path, np.zeros(0, int), np.zeros(0, int), np.zeros((0, dim)))
    dims = {np.asarray(r.features).shape for r in records}
    if len(dims) != 1:
        raise ContractError(f"records have mixed feature shapes: {sorted(dims)}")
    write_embeddings_arrays(
        path,
        [r.stage_id for r in records],
        [r.label for r in records],
        np.stack([np.asarray(r.features) for r in records]),
    )


def parse_embeddings(buf: bytes):
    """Parse ESNF bytes into ``(stage_ids, labels, features)`` arrays."""
    if len(buf) < HEADER.size:
        raise EmbeddingFormatError(
            f"truncated header: need {HEADER.size} bytes, file has {len(buf)}", len(buf))
    magic, version, dim, count = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}, expected {VERSION}", 4)
    if dim == 0:
        raise EmbeddingFormatError("inconsistent dimension: header declares D = 0", 8)
    rec_size = RECORD_PREFIX + 4 * dim
    payload = len(buf) - HEADER.size
    expected = count * rec_size
    if payload != expected:
        if count and payload % count == 0 and (payload // count - RECORD_PREFIX) % 4 == 0:
            implied = (payload // count - RECORD_PREFIX) // 4
            if implied > 0:
                raise EmbeddingFormatError(
                    f"inconsistent dimension: header declares D = {dim} but the payload "
                    f"holds {count} records of D = {implied}", 8)
        complete = min(payload, expected) // rec_size
        end = HEADER.size + complete * rec_size
        if payload > expected:
            raise EmbeddingFormatError(
                f"{payload - expected} trailing bytes after {count} declared records", end)
        if payload % rec_size == 0:
            raise EmbeddingFormatError(
                f"count field declares {count} records but only {complete} are present", end)
        raise EmbeddingFormatError(
            f"truncated payload: record {complete} of {count} is incomplete "
            f"({payload - complete * rec_size} of {rec_size} bytes)", end)
    rec = np.frombuffer(buf, dtype=_record_dtype(dim), count=count, offset=HEADER.size)
    x = rec["x"].astype(np.float64)
    if count:
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise EmbeddingFormatError(f"record {i} has non-finite features", HEADER.size + i * rec_size)
        zero = rec["stage"] == 0
        if zero.any():
            i = int(np.argmax(zero))
            raise EmbeddingFormatError(f"record {i} has stage id 0", HEADER.size + i * rec_size)
    return rec["stage"].astype(np.int64), rec["label"].astype(np.int64), x


def read_embeddings_arrays(path):
    with open(path, "rb") as fh:
        return parse_embeddings(fh.read())


def read_embeddings(path) -> List[FeatureRecord]:
    stages, labels, x = read_embeddings_arrays(path)
    return [FeatureRecord(int(s), int(l), row.copy()) for s, l, row in zip(stages, labels, x)]


# --- manifests ----------------------------------------------------------

def write_stream(directory, stages, mode, manifest_name="manifest.txt"):
    """Write every stage as a pair of ESNF files plus a manifest; returns its path."""
    validate_stream(stages, mode)
    os.makedirs(directory, exist_ok=True)
    lines = ["# stagebank stream manifest", f"mode {mode}"]
    for st in stages:
        names = []
        for split in ("train", "test"):
            name = f"stage{st.stage_id:03d}_{split}.esnf"
            write_embeddings_arrays(os.path.join(directory, name), st.stage_id,
                                    getattr(st, f"{split}_y"), getattr(st, f"{split}_x"))
            names.append(name)
        lines.append(f"stage {st.stage_id} {names[0]} {names[1]} {st.domain_tag}")
    path = os.path.join(directory, manifest_name)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


class ManifestError(ValueError):
    pass


def read_manifest(path):
    """Load a manifest; returns ``(mode, stages)``."""
    base = os.path.dirname(os.path.abspath(path))
    mode, entries = None, []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "mode" and len(parts) == 2:
                mode = parts[1].lower()
                if mode not in MODES:
                    raise ManifestError(f"{path}:{lineno}: unknown mode {parts[1]!r}")
            elif parts[0] == "stage" and len(parts) in (4, 5):
                try:
                    sid = int(parts[1])
                    tag = int(parts[4]) if len(parts) == 5 else 0
                except ValueError:
                    raise ManifestError(f"{path}:{lineno}: stage id and domain tag must be integers") from None
                entries.append((lineno, sid, parts[2], parts[3], tag))
            else:
                raise ManifestError(f"{path}:{lineno}: cannot parse {line!r}")
    if mode is None:
        raise ManifestError(f"{path}: missing 'mode' line")
    if not entries:
        raise ManifestError(f"{path}: no stages listed")
    stages = []
    for lineno, sid, train, test, tag in entries:
        split = {}
        for name, rel in (("train", train), ("test", test)):
            s_ids, labels, x = read_embeddings_arrays(os.path.join(base, rel))
            if len(s_ids) and np.any(s_ids != sid):
                raise ManifestError(f"{path}:{lineno}: {rel} holds records of another stage")
            split[name] = (x, labels)
        label_set = tuple(sorted(set(split["train"][1].tolist()) | set(split["test"][1].tolist())))
        try:
            stages.append(StageDataset(sid, label_set, split["train"][0], split["train"][1],
                                       split["test"][0], split["test"][1], tag))
        except ContractError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
    try:
        validate_stream(stages, mode)
    except ContractError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    return mode, stages
