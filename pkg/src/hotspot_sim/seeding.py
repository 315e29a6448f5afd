"""Deterministic seed derivation for runs and their sampling stages.

Seeds come from SHA-256 over a namespaced string, so any (master seed, run,
stage) triple maps to a stable 64-bit stream seed that can be replayed in
isolation.
"""

import hashlib

import numpy as np

_NAMESPACE = "hotspot-sim/v1"


def derive_seed(*parts) -> int:
    text = ":".join([_NAMESPACE, *map(str, parts)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def run_seed(master_seed: int, run_index: int) -> int:
    return derive_seed("run", master_seed, run_index)


def stage_rng(run_seed_value: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed("stage", run_seed_value, stage))
