"""Seeded, label-addressed random streams.

Every consumer of randomness asks for its own stream keyed by
``(master_seed, label, index)``; streams never share state, so results do not
depend on evaluation order or on how work is scheduled.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _key(master_seed: int, label: str, index: int) -> np.ndarray:
    digest = hashlib.sha256(f"{int(master_seed)}\x1f{label}\x1f{int(index)}".encode()).digest()
    return np.frombuffer(digest[:16], dtype="<u8").copy()


def derive_rng_stream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by a hash of seed, label and index."""
    return np.random.Generator(np.random.Philox(key=_key(master_seed, label, index)))


def derive_seed(master_seed: int, label: str, index: int = 0) -> int:
    """A 63-bit integer seed for libraries that take plain ints (torch)."""
    return int(_key(master_seed, label, index)[0] >> np.uint64(1))


def rng_state_to_json(rng: np.random.Generator) -> str:
    return json.dumps(_to_jsonable(rng.bit_generator.state), sort_keys=True)


def rng_from_json(text: str) -> np.random.Generator:
    state = _from_jsonable(json.loads(text))
    bitgen_cls = getattr(np.random, state["bit_generator"])
    bitgen = bitgen_cls()
    bitgen.state = state
    return np.random.Generator(bitgen)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj
