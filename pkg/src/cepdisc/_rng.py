"""Deterministic seed-stream derivation.

Simulation work derives one independent PCG64 stream per (repetition,
population, replicate, purpose) tuple by hashing the key with blake2s, so
results do not depend on execution order and parallel runs reproduce serial
ones exactly. Python's built-in hash() is salted per process and is not
usable for this.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def derive_seed(master_seed, *keys):
    """Map (master_seed, *keys) to a stable 63-bit integer seed."""
    payload = repr((int(master_seed),) + tuple(keys)).encode("utf-8")
    digest = hashlib.blake2s(payload).digest()
    return int.from_bytes(digest[:8], "little") & _MASK63


def stream(master_seed, *keys):
    """Independent generator for the given key tuple."""
    return np.random.default_rng(derive_seed(master_seed, *keys))
