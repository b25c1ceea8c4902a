"""
Exponential-gap limit model.

Around an interior percentile the scaled spacings between consecutive types are
asymptotically i.i.d. unit exponentials and every incentive reduces to comparing
sums of gaps. This module checks and searches arrangements over such gaps and
estimates π(r) (r consecutive couples admit a stable arrangement) and the
extreme-rank unraveling limits ζ_r (top) and η_r (bottom) by simulation.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from unraveling_pipeline.arrangements import (
    IncentiveTable,
    check_arrangement,
    count_stable_arrangements,
    dp_batch_size,
    enumerate_stable_arrangements,
    search_arrangement,
)
from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import DomainError
from unraveling_pipeline.helper import binomial_se, plan_blocks, run_blocks
from unraveling_pipeline.market_model import MarketRealization, with_bounds

LOGGER = logging.getLogger("LimitModel")

PI_BLOCK_SIZE = 5_000
EXTREME_BLOCK_SIZE = 100_000
ETA_VARIANTS = ("symmetric", "printed")


@dataclass(frozen=True)
class GapVector:
    men_gaps: Tuple[float, ...]
    women_gaps: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "men_gaps", tuple(float(a) for a in self.men_gaps))
        object.__setattr__(self, "women_gaps", tuple(float(a) for a in self.women_gaps))
        if len(self.men_gaps) != len(self.women_gaps):
            raise DomainError("women_gaps: must have as many entries as men_gaps")
        if not self.men_gaps:
            raise DomainError("men_gaps: at least one gap is required")
        if min(self.men_gaps) <= 0 or min(self.women_gaps) <= 0:
            raise DomainError("gaps: every gap must be strictly positive")

    @property
    def r(self) -> int:
        return len(self.men_gaps)

    def table(self) -> IncentiveTable:
        return IncentiveTable.from_gaps(np.asarray(self.men_gaps), np.asarray(self.women_gaps))

    def scaled(self, men_factor: float = 1.0, women_factor: float = 1.0) -> "GapVector":
        return GapVector(
            tuple(a * men_factor for a in self.men_gaps),
            tuple(a * women_factor for a in self.women_gaps),
        )


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    std_error: float
    reps: int
    r: int
    quantity: str = ""
    seed: Optional[int] = None


# ---------------------------------------------------------------------------#
#                       LOCAL STABILITY OVER GAPS                             #
# ---------------------------------------------------------------------------#
def _check_index_set(g: GapVector, I: Iterable[int]) -> Tuple[int, ...]:
    staying = tuple(sorted(int(i) for i in I))
    if any(not 1 <= i <= g.r - 1 for i in staying):
        raise DomainError(f"I: indices must lie in 1..{g.r - 1}")
    if len(set(staying)) != len(staying):
        raise DomainError("I: indices must be distinct")
    return staying


def check_gaps_stable(g: GapVector, I: Iterable[int]) -> bool:
    return check_arrangement(g.table(), _check_index_set(g, I)) is None


def find_stable_gap_arrangement(g: GapVector) -> Optional[Tuple[int, ...]]:
    staying, _ = search_arrangement(g.table())
    return staying


def enumerate_stable_gap_arrangements(g: GapVector, max_r: int = 21) -> List[Tuple[int, ...]]:
    return enumerate_stable_arrangements(g.table(), max_size=max_r - 1)


def local_gaps(C: MarketRealization, start_rank: int, r: int) -> GapVector:
    """
    Spacings m_{start+i} − m_{start+i−1} (and the women's), i = 1..r. Rank 0 is
    the support lower bound and rank n+1 the upper bound.
    """
    if r < 1:
        raise DomainError("r: must be at least 1")
    if start_rank < 0 or start_rank + r > C.n + 1:
        raise DomainError(f"start_rank: window {start_rank}..{start_rank + r} outside 0..{C.n + 1}")
    men = with_bounds(C.men_array, C.dist_men)
    women = with_bounds(C.women_array, C.dist_women)
    window = slice(start_rank, start_rank + r + 1)
    return GapVector(tuple(np.diff(men[window])), tuple(np.diff(women[window])))


# ---------------------------------------------------------------------------#
#                       MONTE CARLO LIMITS                                    #
# ---------------------------------------------------------------------------#
def _validate(r: int, reps: int) -> None:
    if r < 1:
        raise DomainError("r: must be at least 1")
    if reps < 1:
        raise DomainError("reps: must be at least 1")


def _pi_block(r: int, master_seed: int, stream: int, block: int, size: int) -> int:
    rng = SeededSampler(master_seed, stream).block_generator(block)
    men_gaps = rng.exponential(size=(size, r))
    women_gaps = rng.exponential(size=(size, r))
    # r gaps give r − 1 interior couples; the DP runs in sub-batches sized from r alone
    batch = dp_batch_size(r - 1)
    stable = 0
    for start in range(0, size, batch):
        table = IncentiveTable.from_gaps(men_gaps[start:start + batch], women_gaps[start:start + batch])
        stable += int(np.count_nonzero(count_stable_arrangements(table) > 0))
    return stable


def estimate_pi(r: int, reps: int, s: SeededSampler, threads: int = 1) -> LimitEstimate:
    """Share of 2r i.i.d. unit-exponential gap draws that admit a stable arrangement."""
    _validate(r, reps)
    task = functools.partial(_pi_block, r, s.master_seed, s.stream_index)
    successes = sum(run_blocks(task, plan_blocks(reps, PI_BLOCK_SIZE), threads))
    value = successes / reps
    LOGGER.info("pi(%d) = %.6f over %d reps", r, value, reps)
    return LimitEstimate(value, binomial_se(successes, reps), reps, r, "pi", s.master_seed)


def _gamma(rng: np.random.Generator, shape: int, size: int) -> np.ndarray:
    """Γ(shape, 1) as a running sum of unit exponentials; Γ(0, 1) ≡ 0."""
    total = np.zeros(size)
    for _ in range(shape):
        total += rng.exponential(size=size)
    return total


def _extreme_draws(rng: np.random.Generator, r: int, size: int) -> Tuple[np.ndarray, ...]:
    a = _gamma(rng, r - 1, size)
    alpha = _gamma(rng, r - 1, size)
    b, c, beta, gamma = (rng.exponential(size=size) for _ in range(4))
    return a, alpha, b, c, beta, gamma


def zeta_event(a, alpha, b, c, beta, gamma) -> np.ndarray:
    """The r-th highest couple unravels: both members strictly prefer to exit."""
    return (2 * (alpha + beta) * c > (2 * a + b) * b) & (2 * (a + b) * gamma > (2 * alpha + beta) * beta)


def eta_event(a, alpha, b, c, beta, gamma, variant: str = "symmetric") -> np.ndarray:
    """
    The r-th lowest couple unravels. "symmetric" mirrors both clauses of the
    top-rank event; "printed" keeps 2(α+β)β in the second clause.
    """
    first = (2 * a + b) * b > 2 * (alpha + beta) * c
    if variant == "symmetric":
        second = (2 * alpha + beta) * beta > 2 * (a + b) * gamma
    elif variant == "printed":
        second = 2 * (alpha + beta) * beta > 2 * (a + b) * gamma
    else:
        raise DomainError(f"variant: expected one of {ETA_VARIANTS}, got {variant!r}")
    return first & second


def _extreme_block(quantity: str, variant: str, r: int, master_seed: int, stream: int, block: int, size: int) -> int:
    draws = _extreme_draws(SeededSampler(master_seed, stream).block_generator(block), r, size)
    hits = zeta_event(*draws) if quantity == "zeta" else eta_event(*draws, variant=variant)
    return int(np.count_nonzero(hits))


def _estimate_extreme(quantity: str, r: int, reps: int, s: SeededSampler, threads: int, variant: str) -> LimitEstimate:
    _validate(r, reps)
    if variant not in ETA_VARIANTS:
        raise DomainError(f"variant: expected one of {ETA_VARIANTS}, got {variant!r}")
    task = functools.partial(_extreme_block, quantity, variant, r, s.master_seed, s.stream_index)
    successes = sum(run_blocks(task, plan_blocks(reps, EXTREME_BLOCK_SIZE), threads))
    value = successes / reps
    LOGGER.info("%s(%d) = %.6f over %d reps", quantity, r, value, reps)
    return LimitEstimate(value, binomial_se(successes, reps), reps, r, quantity, s.master_seed)


def estimate_zeta(r: int, reps: int, s: SeededSampler, threads: int = 1) -> LimitEstimate:
    return _estimate_extreme("zeta", r, reps, s, threads, "symmetric")


def estimate_eta(r: int, reps: int, s: SeededSampler, threads: int = 1, variant: str = "symmetric") -> LimitEstimate:
    return _estimate_extreme("eta", r, reps, s, threads, variant)


# ---------------------------------------------------------------------------#
#                       RECURSIVE BOUND                                       #
# ---------------------------------------------------------------------------#
def recursive_pi_bound(pi_half: float, l: int) -> float:
    """Upper bound on π for a window twice as long, from π of the half window."""
    if not 0.0 <= pi_half <= 1.0:
        raise DomainError("pi_half: must be a probability")
    if l < 0:
        raise DomainError("l: must be non-negative")
    return 0.25**l * 7.0 / 9.0 + 13.0 / 9.0 * pi_half**2


def recursive_bound_roots() -> Tuple[float, float]:
    """Fixed points of x ↦ 13/9·x² + 7/144, ascending."""
    roots = np.sort(np.real(np.roots([13.0 / 9.0, -1.0, 7.0 / 144.0])))
    return float(roots[0]), float(roots[1])


def eta_1_from_zeta_1(zeta_1: float) -> float:
    """η₁ = 1 − 2√2·L + ζ₁ with L = √2·π/4 − 1/√2 (symmetric variant)."""
    L = math.sqrt(2.0) * math.pi / 4.0 - 1.0 / math.sqrt(2.0)
    return 1.0 - 2.0 * math.sqrt(2.0) * L + zeta_1
