"""
Realised first-period market, early matchings and the stay lists C(μ), C(μ, i).

Ranks are 1-based and ascending: rank 1 is the lowest type on its side.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from unraveling_pipeline.dist_core import SeededSampler, TypeDistribution, draw_sorted
from unraveling_pipeline.errors import ConfigurationError, DomainError, PreconditionError

LOGGER = logging.getLogger("MarketModel")


def _is_sorted(values: Tuple[float, ...]) -> bool:
    return all(a <= b for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class MarketRealization:
    n: int
    k: int
    men: Tuple[float, ...]
    women: Tuple[float, ...]
    dist_men: TypeDistribution
    dist_women: TypeDistribution

    def __post_init__(self) -> None:
        object.__setattr__(self, "men", tuple(float(m) for m in self.men))
        object.__setattr__(self, "women", tuple(float(w) for w in self.women))
        if self.n < 0:
            raise ConfigurationError("n: must be non-negative")
        if self.k < 0:
            raise ConfigurationError("k: must be non-negative")
        if len(self.men) != self.n:
            raise ConfigurationError(f"men: expected {self.n} types, got {len(self.men)}")
        if len(self.women) != self.n:
            raise ConfigurationError(f"women: expected {self.n} types, got {len(self.women)}")
        if not _is_sorted(self.men):
            raise ConfigurationError("men: must be sorted ascending")
        if not _is_sorted(self.women):
            raise ConfigurationError("women: must be sorted ascending")
        if not self.dist_men.contains(self.men):
            raise ConfigurationError("men: types must lie inside the support of dist_men")
        if not self.dist_women.contains(self.women):
            raise ConfigurationError("women: types must lie inside the support of dist_women")

    @classmethod
    def of_pairs(
        cls,
        pairs: Iterable[Tuple[float, float]],
        k: int = 1,
        dist_men: Optional[TypeDistribution] = None,
        dist_women: Optional[TypeDistribution] = None,
    ) -> "MarketRealization":
        """Build from equally ranked (m_i, w_i) couples; both laws default to U[0, 1]."""
        pairs = list(pairs)
        return cls(
            n=len(pairs),
            k=k,
            men=tuple(m for m, _ in pairs),
            women=tuple(w for _, w in pairs),
            dist_men=dist_men or TypeDistribution.uniform(),
            dist_women=dist_women or TypeDistribution.uniform(),
        )

    def man(self, rank: int) -> float:
        return self.men[rank - 1]

    def woman(self, rank: int) -> float:
        return self.women[rank - 1]

    @property
    def men_array(self) -> np.ndarray:
        return np.asarray(self.men, dtype=float)

    @property
    def women_array(self) -> np.ndarray:
        return np.asarray(self.women, dtype=float)


@dataclass(frozen=True)
class EarlyMatching:
    """
    Partial injective rank map. `pairs` lists (man rank, woman rank) couples that
    exit in the first period; every rank not listed stays.
    """

    n: int
    pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        pairs = tuple(sorted((int(i), int(j)) for i, j in self.pairs))
        object.__setattr__(self, "pairs", pairs)
        men = [i for i, _ in pairs]
        women = [j for _, j in pairs]
        for rank in men + women:
            if not 1 <= rank <= self.n:
                raise DomainError(f"pairs: rank {rank} outside 1..{self.n}")
        if len(set(men)) != len(men):
            raise DomainError("pairs: a man is matched twice")
        if len(set(women)) != len(women):
            raise DomainError("pairs: a woman is matched twice (matching must be injective)")

    @classmethod
    def from_map(cls, n: int, mapping: Dict[int, Optional[int]]) -> "EarlyMatching":
        return cls(n, tuple((i, j) for i, j in mapping.items() if j is not None))

    def partner_of(self, man_rank: int) -> Optional[int]:
        for i, j in self.pairs:
            if i == man_rank:
                return j
        return None

    def as_dict(self) -> Dict[int, Optional[int]]:
        mapping: Dict[int, Optional[int]] = {i: None for i in range(1, self.n + 1)}
        mapping.update(dict(self.pairs))
        return mapping

    @property
    def early_men(self) -> List[int]:
        return [i for i, _ in self.pairs]

    @property
    def early_women(self) -> List[int]:
        return sorted(j for _, j in self.pairs)

    def is_assortative(self) -> bool:
        return all(i == j for i, j in self.pairs)

    def crossings(self) -> int:
        """Number of crossing couple pairs: i < i' with μ(i) > μ(i')."""
        pairs = self.pairs
        return sum(
            1
            for a in range(len(pairs))
            for b in range(a + 1, len(pairs))
            if pairs[a][1] > pairs[b][1]
        )


@dataclass(frozen=True)
class StayList:
    """Types (ascending) of the men and women who wait, plus their ranks in C."""

    men_staying: Tuple[float, ...]
    women_staying: Tuple[float, ...]
    men_ranks: Tuple[int, ...] = ()
    women_ranks: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.men_staying)

    def position_of_man(self, rank: int) -> int:
        """1-based position of the man of rank `rank` (in C) among staying men."""
        return self.men_ranks.index(rank) + 1

    def position_of_woman(self, rank: int) -> int:
        return self.women_ranks.index(rank) + 1

    @classmethod
    def of_pairs(cls, pairs: Iterable[Tuple[float, float]]) -> "StayList":
        pairs = list(pairs)
        men = tuple(sorted(m for m, _ in pairs))
        women = tuple(sorted(w for _, w in pairs))
        ranks = tuple(range(1, len(pairs) + 1))
        return cls(men, women, ranks, ranks)


@dataclass(frozen=True)
class AssortativeArrangement:
    """Ranks of the couples that wait; every other couple exits with its equal-rank partner."""

    staying_ranks: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        ranks = tuple(int(i) for i in self.staying_ranks)
        object.__setattr__(self, "staying_ranks", ranks)
        if any(a >= b for a, b in zip(ranks, ranks[1:])):
            raise DomainError("staying_ranks: must be strictly increasing")
        if ranks and ranks[0] < 1:
            raise DomainError("staying_ranks: ranks start at 1")

    def validate(self, n: int) -> None:
        if self.staying_ranks and self.staying_ranks[-1] > n:
            raise DomainError(f"staying_ranks: rank {self.staying_ranks[-1]} outside 1..{n}")


# ---------------------------------------------------------------------------#
#                       STAY LISTS                                            #
# ---------------------------------------------------------------------------#
def _build(C: MarketRealization, men_ranks: List[int], women_ranks: List[int]) -> StayList:
    men_ranks = sorted(men_ranks)
    women_ranks = sorted(women_ranks)
    return StayList(
        men_staying=tuple(C.man(i) for i in men_ranks),
        women_staying=tuple(C.woman(j) for j in women_ranks),
        men_ranks=tuple(men_ranks),
        women_ranks=tuple(women_ranks),
    )


def _check_matching(C: MarketRealization, mu: EarlyMatching) -> None:
    if mu.n != C.n:
        raise DomainError(f"matching: defined for n={mu.n}, realization has n={C.n}")


def stay_list(C: MarketRealization, mu: EarlyMatching) -> StayList:
    _check_matching(C, mu)
    early_men = set(mu.early_men)
    early_women = set(mu.early_women)
    return _build(
        C,
        [i for i in range(1, C.n + 1) if i not in early_men],
        [j for j in range(1, C.n + 1) if j not in early_women],
    )


def stay_list_with_pair(C: MarketRealization, mu: EarlyMatching, i: int) -> StayList:
    """C(μ, i): the waiters plus the early couple (m_i, w_μ(i))."""
    _check_matching(C, mu)
    if not 1 <= i <= C.n:
        raise DomainError(f"i: rank {i} outside 1..{C.n}")
    partner = mu.partner_of(i)
    if partner is None:
        raise PreconditionError(f"i: man {i} does not match early under μ")
    base = stay_list(C, mu)
    return _build(C, list(base.men_ranks) + [i], list(base.women_ranks) + [partner])


def arrangement_to_matching(I: AssortativeArrangement, n: int) -> EarlyMatching:
    I.validate(n)
    staying = set(I.staying_ranks)
    return EarlyMatching(n, tuple((i, i) for i in range(1, n + 1) if i not in staying))


def draw_realization(
    n: int,
    k: int,
    dist_men: TypeDistribution,
    dist_women: TypeDistribution,
    rng: np.random.Generator,
) -> MarketRealization:
    men = draw_sorted(dist_men, n, rng)
    women = draw_sorted(dist_women, n, rng)
    return MarketRealization(n, k, tuple(men), tuple(women), dist_men, dist_women)


def draw_type_batch(
    n: int,
    size: int,
    dist_men: TypeDistribution,
    dist_women: TypeDistribution,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """`size` realizations at once as two (size, n) arrays of ascending types."""
    men = np.asarray(dist_men.quantile(np.sort(rng.random((size, n)), axis=1)), dtype=float)
    women = np.asarray(dist_women.quantile(np.sort(rng.random((size, n)), axis=1)), dtype=float)
    return men, women


def with_bounds(types: np.ndarray, dist: TypeDistribution) -> np.ndarray:
    """Pad (..., n) types with the support bounds as ranks 0 and n+1."""
    types = np.asarray(types, dtype=float)
    pad = types.shape[:-1] + (1,)
    return np.concatenate([np.full(pad, dist.lower), types, np.full(pad, dist.upper)], axis=-1)


def sample_realization(
    n: int,
    k: int,
    dist_men: TypeDistribution,
    dist_women: TypeDistribution,
    sampler: SeededSampler,
) -> MarketRealization:
    """Men first, then women, both from the sampler's single stream."""
    return draw_realization(n, k, dist_men, dist_women, sampler.generator())
