"""Model-bank files.

Layout::

    b"ESNB" | u32 version | u64 header length | header (UTF-8 JSON)
    | parameter arrays (float64, little-endian, in header order)
    | SHA-256 of everything above (32 bytes)

The header lists, per head, its stage id, label set and the shapes of its
parameter arrays, plus the voting temperatures, energy config and mode.
Output is byte-deterministic for a given bank.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .energy import ContractError
from .head import PARAM_NAMES, EnergyConfig, StageHead
from .inference import ModelBank

MAGIC = b"ESNB"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DIGEST = 32


class BankFormatError(ValueError):
    pass


def dumps_bank(bank: ModelBank) -> bytes:
    heads, blobs = [], []
    for h in bank.heads:
        arrays = []
        for name in PARAM_NAMES:
            p = getattr(h, name)
            if p is not None:
                arrays.append([name, list(p.shape)])
                blobs.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        heads.append({"stage_id": h.stage_id, "label_set": list(h.label_set), "arrays": arrays})
    header = {
        "mode": bank.mode,
        "omega": [float(t) for t in bank.omega],
        "cfg": {"anchor": bank.cfg.anchor, "lam": bank.cfg.lam,
                "train_temperature": bank.cfg.train_temperature},
        "heads": heads,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def loads_bank(buf: bytes) -> ModelBank:
    if len(buf) < _PREFIX.size + _DIGEST:
        raise BankFormatError(f"file too short ({len(buf)} bytes)")
    magic, version, hlen = _PREFIX.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BankFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BankFormatError(f"unsupported bank version {version}")
    body, digest = buf[:-_DIGEST], buf[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise BankFormatError("checksum mismatch: file is truncated or corrupted")
    try:
        header = json.loads(body[_PREFIX.size:_PREFIX.size + hlen])
        pos = _PREFIX.size + hlen
        heads = []
        for entry in header["heads"]:
            params = {}
            for name, shape in entry["arrays"]:
                if name not in PARAM_NAMES:
                    raise BankFormatError(f"unknown parameter {name!r}")
                n = int(np.prod(shape)) * 8
                if pos + n > len(body):
                    raise BankFormatError("parameter data shorter than the header declares")
                params[name] = np.frombuffer(body, dtype="<f8", count=n // 8, offset=pos).reshape(shape).copy()
                pos += n
            heads.append(StageHead(entry["stage_id"], entry["label_set"], **params))
        if pos != len(body):
            raise BankFormatError(f"{len(body) - pos} unexpected bytes after parameter data")
        cfg = EnergyConfig(**header["cfg"])
        return ModelBank(heads, header["omega"], cfg, header["mode"])
    except BankFormatError:
        raise
    except (KeyError, TypeError, ValueError, ContractError) as exc:
        raise BankFormatError(f"malformed bank header: {exc}") from None


def save_bank(path, bank: ModelBank):
    data = dumps_bank(bank)
    with open(path, "wb") as fh:
        fh.write(data)


def load_bank(path) -> ModelBank:
    with open(path, "rb") as fh:
        return loads_bank(fh.read())
