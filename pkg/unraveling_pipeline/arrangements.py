"""
Assortative arrangements: which equally ranked couples wait and which exit.

Both the realised-market check and the exponential-gap limit model reduce to the
same question over positions 0..N+1, where 0 and N+1 are stayers fixed from
outside (support bounds, window edges, or the virtual ranks of the limit model):

    * a staying couple c with staying neighbours (p, x) must not have both
      members strictly preferring to exit;
    * every couple i strictly between consecutive stayers (c, x) must have both
      members strictly preferring to exit, bracketed by (c, x).

An IncentiveTable holds, for every couple i, the weighted downside against each
lower bracket and the weighted upside against each upper bracket, so every
check is one subtraction. The search is a DP over (previous stayer, current
stayer) states and runs on a leading batch axis as well.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from unraveling_pipeline.dist_core import TypeDistribution
from unraveling_pipeline.errors import ResourceGuardError
from unraveling_pipeline.market_model import MarketRealization, with_bounds
from unraveling_pipeline.payoff_engine import EXACT_TOLERANCE, downside_upside

LOGGER = logging.getLogger("ArrangementSearch")

NEAR_INDIFFERENCE = 1e-9
# DP scratch per batch is a handful of (batch, N+2, N+2) arrays
DP_CELLS_PER_BATCH = 1_000_000


def dp_batch_size(n: int) -> int:
    """Tables of n interior couples that fit one DP batch."""
    return max(1, DP_CELLS_PER_BATCH // (n + 2) ** 2)


@dataclass(frozen=True)
class IncentiveTable:
    """
    Arrays of shape (..., N+2, N+2).

    men_down[..., i, lo]  weighted downside of man i when the lower stayer is lo
    men_up[..., i, hi]    weighted upside of man i when the upper stayer is hi
    (likewise for women). Man i strictly prefers to exit iff down − up > tolerance.
    """

    men_down: np.ndarray
    men_up: np.ndarray
    women_down: np.ndarray
    women_up: np.ndarray
    tolerance: float = EXACT_TOLERANCE

    @property
    def size(self) -> int:
        """Number of interior couples N."""
        return self.men_down.shape[-1] - 2

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.men_down.shape[:-2]

    # -------- constructors -------- #
    @classmethod
    def from_types(
        cls,
        men_ext: np.ndarray,
        women_ext: np.ndarray,
        dist_men: TypeDistribution,
        dist_women: TypeDistribution,
        tolerance: float = EXACT_TOLERANCE,
    ) -> "IncentiveTable":
        """
        `men_ext` / `women_ext` are (..., N+2) ascending types whose first and last
        entries are the fixed outer stayers.
        """
        men_ext = np.asarray(men_ext, dtype=float)
        women_ext = np.asarray(women_ext, dtype=float)
        men_down, men_up = cls._side(men_ext, women_ext, dist_men, dist_women)
        women_down, women_up = cls._side(women_ext, men_ext, dist_women, dist_men)
        return cls(men_down, men_up, women_down, women_up, tolerance)

    @staticmethod
    def _side(
        own_ext: np.ndarray,
        partner_ext: np.ndarray,
        own_dist: TypeDistribution,
        partner_dist: TypeDistribution,
    ) -> Tuple[np.ndarray, np.ndarray]:
        q = np.asarray(own_dist.cdf(own_ext))[..., :, None]
        w = partner_ext[..., :, None]
        bracket = partner_ext[..., None, :]
        return downside_upside(q, partner_dist, w, bracket, bracket)

    @classmethod
    def from_realization(cls, C: MarketRealization) -> "IncentiveTable":
        """Whole market, bracketed by the support bounds of both laws."""
        men_ext = with_bounds(C.men_array, C.dist_men)
        women_ext = with_bounds(C.women_array, C.dist_women)
        return cls.from_types(men_ext, women_ext, C.dist_men, C.dist_women)

    @classmethod
    def from_gaps(cls, men_gaps: np.ndarray, women_gaps: np.ndarray) -> "IncentiveTable":
        """
        Limit model: a man compares the women's gaps below and above his rank,
        a woman the men's. Gaps have shape (..., r); the table covers N = r − 1
        interior couples and uses exact comparisons.
        """
        men_down, men_up = cls._gap_side(np.asarray(women_gaps, dtype=float))
        women_down, women_up = cls._gap_side(np.asarray(men_gaps, dtype=float))
        return cls(men_down, men_up, women_down, women_up, 0.0)

    @staticmethod
    def _gap_side(gaps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        zero = np.zeros(gaps.shape[:-1] + (1,))
        partial = np.concatenate([zero, np.cumsum(gaps, axis=-1)], axis=-1)
        down = partial[..., :, None] - partial[..., None, :]
        return down, -down

    # -------- single-table predicates -------- #
    def man_margin(self, i: int, lo: int, hi: int) -> float:
        return float(self.men_down[i, lo] - self.men_up[i, hi])

    def woman_margin(self, i: int, lo: int, hi: int) -> float:
        return float(self.women_down[i, lo] - self.women_up[i, hi])

    def exits(self, i: int, lo: int, hi: int) -> bool:
        """Both members of couple i strictly prefer to exit when bracketed by (lo, hi)."""
        return self.man_margin(i, lo, hi) > self.tolerance and self.woman_margin(i, lo, hi) > self.tolerance


@dataclass(frozen=True)
class CoupleCheck:
    """One couple's incentive check under an arrangement."""

    kind: str  # "stay" or "exit"
    rank: int
    lo: int
    hi: int
    man_margin: float
    woman_margin: float
    passed: bool


# ---------------------------------------------------------------------------#
#                       CHECKING ONE ARRANGEMENT                              #
# ---------------------------------------------------------------------------#
def couple_checks(table: IncentiveTable, staying: Sequence[int]) -> Iterator[CoupleCheck]:
    """Every couple's check, in rank order."""
    bounds = [0, *staying, table.size + 1]
    bracket = {}
    for l in range(len(bounds) - 1):
        lo, hi = bounds[l], bounds[l + 1]
        for i in range(lo + 1, hi):
            bracket[i] = ("exit", lo, hi)
        if l + 1 < len(bounds) - 1:
            bracket[hi] = ("stay", lo, bounds[l + 2])
    tol = table.tolerance
    for rank in range(1, table.size + 1):
        kind, lo, hi = bracket[rank]
        man = table.man_margin(rank, lo, hi)
        woman = table.woman_margin(rank, lo, hi)
        both = man > tol and woman > tol
        yield CoupleCheck(kind, rank, lo, hi, man, woman, both if kind == "exit" else not both)


def check_arrangement(table: IncentiveTable, staying: Sequence[int]) -> Optional[CoupleCheck]:
    """First failing couple in rank order, or None when the arrangement is stable."""
    for check in couple_checks(table, staying):
        if not check.passed:
            return check
    return None


def near_indifferent(table: IncentiveTable, staying: Sequence[int]) -> List[str]:
    flagged = []
    for check in couple_checks(table, staying):
        if abs(check.man_margin) <= NEAR_INDIFFERENCE:
            flagged.append(f"{check.kind}:man:{check.rank}")
        if abs(check.woman_margin) <= NEAR_INDIFFERENCE:
            flagged.append(f"{check.kind}:woman:{check.rank}")
    return flagged


# ---------------------------------------------------------------------------#
#                       DYNAMIC PROGRAM                                       #
# ---------------------------------------------------------------------------#
def _batched(table: IncentiveTable) -> Tuple[np.ndarray, ...]:
    arrays = (table.men_down, table.men_up, table.women_down, table.women_up)
    if table.men_down.ndim == 2:
        return tuple(a[None] for a in arrays)
    return arrays


def _exit_block(arrays: Tuple[np.ndarray, ...], c: int, tol: float, upper_tri: np.ndarray) -> np.ndarray:
    """
    (B, S−c−1): for each next stayer x > c, whether every couple strictly
    between c and x exits with bracket (c, x).
    """
    md, mu, wd, wu = arrays
    man = (md[:, c + 1:, c][:, :, None] - mu[:, c + 1:, c + 1:]) > tol
    woman = (wd[:, c + 1:, c][:, :, None] - wu[:, c + 1:, c + 1:]) > tol
    m = man.shape[-1]
    # rows i >= x are not between c and x
    return ((man & woman) | ~upper_tri[:m, :m]).all(axis=1)


def _stay_ok(arrays: Tuple[np.ndarray, ...], c: int, tol: float) -> np.ndarray:
    """(B, c, S−c−1): couple c may wait between previous stayer p and next stayer x."""
    md, mu, wd, wu = arrays
    man = (md[:, c, :c][:, :, None] - mu[:, c, c + 1:][:, None, :]) > tol
    woman = (wd[:, c, :c][:, :, None] - wu[:, c, c + 1:][:, None, :]) > tol
    return ~(man & woman)


def _backward(table: IncentiveTable) -> Tuple[np.ndarray, np.ndarray]:
    """
    Path counts of the DP, computed from the top rank down.

    paths[b, p, c] counts the stable completions above stayer c given the previous
    stayer p; block[b, c, x] marks admissible exit runs between stayers c and x.
    Counts are float so that degenerate inputs saturate instead of overflowing.
    """
    arrays = _batched(table)
    batch = arrays[0].shape[0]
    S = arrays[0].shape[-1]
    top = S - 1
    upper_tri = np.triu(np.ones((S, S), dtype=bool), k=1)
    paths = np.zeros((batch, S, S))
    block = np.zeros((batch, S, S), dtype=bool)
    for c in range(top - 1, -1, -1):
        block[:, c, c + 1:] = _exit_block(arrays, c, table.tolerance, upper_tri)
        if c == 0:
            break
        tail = paths[:, c, c + 1:].copy()
        tail[:, -1] = 1.0
        weights = np.where(block[:, c, c + 1:], tail, 0.0)
        stay_ok = _stay_ok(arrays, c, table.tolerance).astype(float)
        paths[:, :c, c] = np.einsum("bpx,bx->bp", stay_ok, weights)
    return paths, block


def _start_weights(paths: np.ndarray, block: np.ndarray) -> np.ndarray:
    tail = paths[:, 0, 1:].copy()
    tail[:, -1] = 1.0
    return np.where(block[:, 0, 1:], tail, 0.0)


def count_stable_arrangements(table: IncentiveTable) -> np.ndarray:
    """Number of stable arrangements for every table in the batch."""
    paths, block = _backward(table)
    totals = _start_weights(paths, block).sum(axis=-1)
    return totals.reshape(table.batch_shape)


def search_arrangement(table: IncentiveTable) -> Tuple[Optional[Tuple[int, ...]], int]:
    """
    Stable arrangement of a single table and the number of stable arrangements.
    Reconstruction takes the smallest admissible next stayer at every step.
    """
    if table.men_down.ndim != 2:
        raise ValueError("search_arrangement expects a single (unbatched) table")
    paths, block = _backward(table)
    paths, block = paths[0], block[0]
    weights = _start_weights(paths[None], block[None])[0]
    total = float(weights.sum())
    if total <= 0.0:
        return None, 0
    top = table.size + 1
    md, mu, wd, wu = table.men_down, table.men_up, table.women_down, table.women_up
    tol = table.tolerance
    staying: List[int] = []
    c = 0
    x = 1 + int(np.flatnonzero(weights > 0)[0])
    while x != top:
        staying.append(x)
        p, c = c, x
        tail = paths[c, c + 1:].copy()
        tail[-1] = 1.0
        man = (md[c, p] - mu[c, c + 1:]) > tol
        woman = (wd[c, p] - wu[c, c + 1:]) > tol
        candidates = ~(man & woman) & block[c, c + 1:] & (tail > 0)
        x = c + 1 + int(np.flatnonzero(candidates)[0])
    return tuple(staying), int(min(total, 2**53))


# ---------------------------------------------------------------------------#
#                       EXHAUSTIVE ORACLE                                     #
# ---------------------------------------------------------------------------#
def enumerate_stable_arrangements(table: IncentiveTable, max_size: int = 20) -> List[Tuple[int, ...]]:
    """Every subset of interior ranks that passes `check_arrangement`."""
    N = table.size
    if N > max_size:
        raise ResourceGuardError(f"n: exhaustive search over 2^{N} subsets exceeds the guard of n <= {max_size}")
    found = []
    ranks = range(1, N + 1)
    for size in range(N + 1):
        for staying in itertools.combinations(ranks, size):
            if check_arrangement(table, staying) is None:
                found.append(staying)
    LOGGER.debug("exhaustive search over %d couples found %d arrangements", N, len(found))
    return found
