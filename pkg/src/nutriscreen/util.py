"""Seed derivation and deterministic worker-pool helpers.

All randomness flows from one root seed through named derivation, so a run
is reproducible at any worker count: tasks are pure functions of their
derived seed and results are reduced in submission order.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

_MASK63 = (1 << 63) - 1


def derive_seed(root: int, *names) -> int:
    """Derive a child seed from a root seed and a path of names.

    Stable across platforms and processes (SHA-256 of the textual path).
    """
    path = "/".join(str(n) for n in (root, *names))
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK63


def rng_for(root: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))


def parallel_map(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    """Map `fn` over `tasks`, preserving task order in the result.

    `fn` must be pure w.r.t. shared state; with workers > 1 the tasks run on
    a thread pool (the numba kernels release the GIL), and the output is
    identical to the serial run by construction.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def stable_json(obj) -> str:
    """Canonical JSON used everywhere a byte-stable artifact is required."""
    import json

    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
