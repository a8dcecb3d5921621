"""Versioned binary checkpoints.

Layout (little-endian):

    bytes 0..7    magic  b"ADVGAITB"
    bytes 8..11   format version (u32), currently 1
    bytes 12..19  header length L (u64)
    bytes 20..    UTF-8 JSON header of length L:
                    {"kind": ..., "meta": {...},
                     "arrays": [{"name", "shape", "dtype"}, ...]}
    then the raw array payloads, C-order, in header order.

Round-trips are bit-exact; loaders reject unknown magic or versions.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ADVGAITB"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_blob(path, kind: str, meta: dict, arrays: dict) -> None:
    specs = [{"name": k, "shape": list(v.shape), "dtype": str(v.dtype)}
             for k, v in arrays.items()]
    header = json.dumps({"kind": kind, "meta": meta, "arrays": specs}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for k, _ in [(s["name"], s) for s in specs]:
            fh.write(np.ascontiguousarray(arrays[k]).tobytes())


def load_blob(path, expected_kind: str | None = None):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not an advgait checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        if expected_kind is not None and header["kind"] != expected_kind:
            raise CheckpointError(f"{path}: kind {header['kind']!r}, "
                                  f"expected {expected_kind!r}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dtype = np.dtype(spec["dtype"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(n * dtype.itemsize)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header["meta"], arrays


def save_policy(path, policy, extra: dict | None = None) -> None:
    meta = {
        "obs_dim": policy.obs_dim,
        "priv_dim": policy.priv_dim,
        "act_dim": policy.act_dim,
        "hidden": list(policy.hidden),
        "init_std": policy.init_std,
        "recurrent": policy.recurrent,
        "recurrent_size": policy.recurrent_size,
        "extra": extra or {},
    }
    save_blob(path, "mlp-policy", meta, {"flat": policy.get_flat()})


def load_policy(path):
    from .nets import MlpPolicy
    meta, arrays = load_blob(path, "mlp-policy")
    policy = MlpPolicy(meta["obs_dim"], meta["priv_dim"], meta["act_dim"],
                       hidden=tuple(meta["hidden"]), init_std=meta["init_std"],
                       seed=0, recurrent=meta["recurrent"],
                       recurrent_size=meta["recurrent_size"])
    policy.set_flat(arrays["flat"])
    return policy, meta["extra"]
