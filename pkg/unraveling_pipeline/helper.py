# ---------------------------------------------------------------------------#
#                       HELPERS (SEEDS, BLOCKS, MOMENTS)                      #
# ---------------------------------------------------------------------------#
from __future__ import annotations

import hashlib
import json
import math
import uuid
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np


def _stable_digest(payload: Dict[str, Any]) -> str:
    """Short sha256 of a JSON-serialisable payload (keys sorted)."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def _stable_run_id(seed: int, experiment: str) -> str:
    ns_uuid = uuid.uuid5(uuid.NAMESPACE_OID, f"{experiment}:{seed}")
    return f"{experiment}_{str(ns_uuid)[:8]}"


def resolve_seed(seed: Optional[int]) -> int:
    """Return `seed`, or draw a fresh non-negative 63-bit seed from OS entropy."""
    if seed is not None:
        return int(seed)
    return int(np.random.default_rng().integers(0, 2**63 - 1))


def plan_blocks(reps: int, block_size: int) -> List[int]:
    """Split `reps` into consecutive blocks of `block_size` (last one may be short)."""
    full, rest = divmod(reps, block_size)
    sizes = [block_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def run_blocks(task: Callable[[int, int], Any], sizes: List[int], threads: int = 1) -> List[Any]:
    """
    Run `task(block_index, block_size)` for every block and return the results in
    block order. With threads > 1 the blocks are spread over worker processes;
    `task` must then be picklable (a module-level function or a functools.partial).
    """
    indices = list(range(len(sizes)))
    if threads <= 1 or len(sizes) <= 1:
        return [task(b, size) for b, size in zip(indices, sizes)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, indices, sizes))


def binomial_se(successes: int, trials: int) -> float:
    """Normal-approximation standard error of a Bernoulli frequency."""
    if trials <= 0:
        return 0.0
    p = successes / trials
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations of a sample."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(((values - mean) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        # pairwise update; exact in count, stable in mean/variance
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        return Moments(total, mean, m2)

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return 0.0
        variance = self.m2 / (self.count - 1)
        return math.sqrt(max(variance, 0.0) / self.count)
