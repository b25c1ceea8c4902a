"""
Pairwise-stability verdicts for early matchings, the assortative-arrangement
search that decides chaos, and the uncrossing conversion.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from unraveling_pipeline.arrangements import (
    IncentiveTable,
    check_arrangement,
    enumerate_stable_arrangements,
    near_indifferent,
    search_arrangement,
)
from unraveling_pipeline.errors import PreconditionError, ResourceGuardError, UnsupportedConfigurationError
from unraveling_pipeline.market_model import (
    AssortativeArrangement,
    EarlyMatching,
    MarketRealization,
    StayList,
    arrangement_to_matching,
    stay_list,
    stay_list_with_pair,
)
from unraveling_pipeline.payoff_engine import (
    EXACT_TOLERANCE,
    PayoffQuery,
    expected_match_man_k1,
    expected_match_woman_k1,
    payoff_margin,
)

LOGGER = logging.getLogger("StabilityEngine")

BRUTEFORCE_ASSORTATIVE_MAX_N = 20
BRUTEFORCE_FULL_MAX_N = 5
WITNESS_SLACK = 1e-9
NEAR_INDIFFERENCE = 1e-9


@dataclass(frozen=True)
class DeviationWitness:
    """An early-matched agent who weakly prefers to wait (condition 1 fails)."""

    side: str
    rank: int
    partner_rank: int
    margin: float = 0.0
    kind: str = field(default="deviation", init=False)


@dataclass(frozen=True)
class BlockingPairWitness:
    """A staying man and woman who both strictly prefer to exit together (condition 2 fails)."""

    man_rank: int
    woman_rank: int
    man_margin: float = 0.0
    woman_margin: float = 0.0
    kind: str = field(default="blocking_pair", init=False)


Witness = Union[DeviationWitness, BlockingPairWitness]


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    witness: Optional[Witness] = None
    near_indifference: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stable": self.stable,
            "witness": asdict(self.witness) if self.witness else None,
            "near_indifference": list(self.near_indifference),
        }


@dataclass(frozen=True)
class ChaosReport:
    chaotic: bool
    stable_arrangement: Optional[AssortativeArrangement] = None
    arrangements_found: int = 0


def _require_k1(C: MarketRealization, operation: str) -> None:
    if C.k != 1:
        raise UnsupportedConfigurationError(f"k: {operation} is only defined for k = 1 (got k = {C.k})")


# ---------------------------------------------------------------------------#
#                       GENERAL EARLY MATCHINGS                               #
# ---------------------------------------------------------------------------#
def _margins(
    C: MarketRealization, stay: StayList, man_rank: int, woman_rank: int
) -> Tuple[float, float]:
    """partner − expected match for man `man_rank` and woman `woman_rank` on `stay`, paired together."""
    man_q = PayoffQuery.at(stay, "man", stay.position_of_man(man_rank))
    woman_q = PayoffQuery.at(stay, "woman", stay.position_of_woman(woman_rank))
    man = payoff_margin(man_q, C.woman(woman_rank), C.dist_women, C.dist_men)
    woman = payoff_margin(woman_q, C.man(man_rank), C.dist_men, C.dist_women)
    return man, woman


def _early_checks(C: MarketRealization, mu: EarlyMatching) -> Iterator[Tuple[Optional[Witness], List[str]]]:
    for i, j in mu.pairs:
        man, woman = _margins(C, stay_list_with_pair(C, mu, i), i, j)
        flags = []
        if abs(man) <= NEAR_INDIFFERENCE:
            flags.append(f"exit:man:{i}")
        if abs(woman) <= NEAR_INDIFFERENCE:
            flags.append(f"exit:woman:{j}")
        if man <= EXACT_TOLERANCE:
            yield DeviationWitness("man", i, j, man), flags
        elif woman <= EXACT_TOLERANCE:
            yield DeviationWitness("woman", j, i, woman), flags
        else:
            yield None, flags


def _staying_checks(C: MarketRealization, mu: EarlyMatching) -> Iterator[Tuple[Optional[Witness], List[str]]]:
    stay = stay_list(C, mu)
    if len(stay) == 0:
        return
    men = np.asarray(stay.men_staying)
    women = np.asarray(stay.women_staying)
    # margin against the equal-position partner, shifted to every other staying partner
    base = np.array([_margins(C, stay, i, j) for i, j in zip(stay.men_ranks, stay.women_ranks)])
    man_margin = base[:, 0][:, None] + (women[None, :] - women[:, None])
    woman_margin = base[:, 1][None, :] + (men[:, None] - men[None, :])
    for a, i in enumerate(stay.men_ranks):
        for b, j in enumerate(stay.women_ranks):
            flags = []
            if abs(man_margin[a, b]) <= NEAR_INDIFFERENCE:
                flags.append(f"stay:man:{i}:woman:{j}")
            if abs(woman_margin[a, b]) <= NEAR_INDIFFERENCE:
                flags.append(f"stay:woman:{j}:man:{i}")
            blocking = man_margin[a, b] > EXACT_TOLERANCE and woman_margin[a, b] > EXACT_TOLERANCE
            witness = BlockingPairWitness(i, j, float(man_margin[a, b]), float(woman_margin[a, b]))
            yield (witness if blocking else None), flags


def check_early_matching_stable(C: MarketRealization, mu: EarlyMatching) -> StabilityVerdict:
    """
    Condition 1: every early couple strictly prefers its partner to waiting,
    judged on C(μ, i). Condition 2: no staying man and woman both strictly
    prefer to exit together, judged on C(μ). The first violation is the witness.
    """
    _require_k1(C, "check_early_matching_stable")
    flags: List[str] = []
    witness: Optional[Witness] = None
    for found, found_flags in itertools.chain(_early_checks(C, mu), _staying_checks(C, mu)):
        flags.extend(found_flags)
        if found is not None and witness is None:
            witness = found
    return StabilityVerdict(witness is None, witness, tuple(flags))


def witness_holds(C: MarketRealization, mu: EarlyMatching, witness: Witness) -> bool:
    """Re-derive the violation from expected-match payoffs rather than the integral margins."""
    if isinstance(witness, DeviationWitness):
        if witness.side == "man":
            if mu.partner_of(witness.rank) != witness.partner_rank:
                return False
            stay = stay_list_with_pair(C, mu, witness.rank)
            q = PayoffQuery.at(stay, "man", stay.position_of_man(witness.rank))
            payoff = expected_match_man_k1(q, C.dist_women, C.dist_men)
            return payoff >= C.woman(witness.partner_rank) - WITNESS_SLACK
        if mu.partner_of(witness.partner_rank) != witness.rank:
            return False
        stay = stay_list_with_pair(C, mu, witness.partner_rank)
        q = PayoffQuery.at(stay, "woman", stay.position_of_woman(witness.rank))
        payoff = expected_match_woman_k1(q, C.dist_men, C.dist_women)
        return payoff >= C.man(witness.partner_rank) - WITNESS_SLACK

    stay = stay_list(C, mu)
    if witness.man_rank not in stay.men_ranks or witness.woman_rank not in stay.women_ranks:
        return False
    man_q = PayoffQuery.at(stay, "man", stay.position_of_man(witness.man_rank))
    woman_q = PayoffQuery.at(stay, "woman", stay.position_of_woman(witness.woman_rank))
    man_payoff = expected_match_man_k1(man_q, C.dist_women, C.dist_men)
    woman_payoff = expected_match_woman_k1(woman_q, C.dist_men, C.dist_women)
    return (
        man_payoff < C.woman(witness.woman_rank) + WITNESS_SLACK
        and woman_payoff < C.man(witness.man_rank) + WITNESS_SLACK
    )


# ---------------------------------------------------------------------------#
#                       ASSORTATIVE ARRANGEMENTS                              #
# ---------------------------------------------------------------------------#
def check_assortative_stable(C: MarketRealization, I: AssortativeArrangement) -> StabilityVerdict:
    """Arrangement conditions with the virtual stayers 0 and n+1 at the support bounds."""
    I.validate(C.n)
    table = IncentiveTable.from_realization(C)
    failed = check_arrangement(table, I.staying_ranks)
    flags = tuple(near_indifferent(table, I.staying_ranks))
    if failed is None:
        return StabilityVerdict(True, None, flags)
    if failed.kind == "stay":
        witness: Witness = BlockingPairWitness(failed.rank, failed.rank, failed.man_margin, failed.woman_margin)
    elif failed.man_margin <= table.tolerance:
        witness = DeviationWitness("man", failed.rank, failed.rank, failed.man_margin)
    else:
        witness = DeviationWitness("woman", failed.rank, failed.rank, failed.woman_margin)
    return StabilityVerdict(False, witness, flags)


def find_stable_assortative(C: MarketRealization) -> ChaosReport:
    staying, found = search_arrangement(IncentiveTable.from_realization(C))
    if staying is None:
        return ChaosReport(True, None, 0)
    return ChaosReport(False, AssortativeArrangement(staying), found)


def find_stable_bruteforce_assortative(C: MarketRealization) -> List[AssortativeArrangement]:
    table = IncentiveTable.from_realization(C)
    found = enumerate_stable_arrangements(table, max_size=BRUTEFORCE_ASSORTATIVE_MAX_N)
    return [AssortativeArrangement(staying) for staying in found]


def _partial_injections(n: int) -> Iterator[Dict[int, Optional[int]]]:
    """Every early matching on n couples, starting from everyone waiting."""

    def extend(i: int, used: frozenset, current: Dict[int, Optional[int]]):
        if i > n:
            yield dict(current)
            return
        for j in [None, *range(1, n + 1)]:
            if j is not None and j in used:
                continue
            current[i] = j
            yield from extend(i + 1, used | {j} if j is not None else used, current)
        del current[i]

    yield from extend(1, frozenset(), {})


def find_stable_bruteforce_full(C: MarketRealization) -> Optional[EarlyMatching]:
    _require_k1(C, "find_stable_bruteforce_full")
    if C.n > BRUTEFORCE_FULL_MAX_N:
        raise ResourceGuardError(
            f"n: enumerating every early matching is limited to n <= {BRUTEFORCE_FULL_MAX_N} (got {C.n})"
        )
    for mapping in _partial_injections(C.n):
        mu = EarlyMatching.from_map(C.n, mapping)
        if check_early_matching_stable(C, mu).stable:
            return mu
    return None


def uncross(C: MarketRealization, mu: EarlyMatching) -> EarlyMatching:
    """
    Repeatedly fixes the lowest crossed rank: if man i is matched to j ≠ i and
    woman i to man i', rematch i↔i and i'↔j. Needs the early men and early women
    to occupy the same ranks.
    """
    if mu.n != C.n:
        raise PreconditionError(f"matching: defined for n={mu.n}, realization has n={C.n}")
    if set(mu.early_men) != set(mu.early_women):
        raise PreconditionError("matching: early men and early women must occupy the same ranks")
    mapping = dict(mu.pairs)
    crossings = mu.crossings()
    while True:
        crossed = [i for i in sorted(mapping) if mapping[i] != i]
        if not crossed:
            break
        i = crossed[0]
        j = mapping[i]
        i_prime = next(m for m, w in mapping.items() if w == i)
        mapping[i], mapping[i_prime] = i, j
        now = EarlyMatching(mu.n, tuple(mapping.items())).crossings()
        LOGGER.debug("uncross: rank %d fixed, crossings %d -> %d", i, crossings, now)
        crossings = now
    return EarlyMatching(mu.n, tuple(mapping.items()))


def is_chaotic(C: MarketRealization) -> bool:
    _require_k1(C, "is_chaotic")
    return find_stable_assortative(C).chaotic


# ---------------------------------------------------------------------------#
#                       REPORT                                                #
# ---------------------------------------------------------------------------#
def analysis_report(C: MarketRealization, mu: Optional[EarlyMatching] = None) -> Dict[str, Any]:
    """
    Chaos verdict plus the stability verdict of `mu` (everyone waiting when absent).
    Shared by the `analyze` subcommand and the HTTP service.
    """
    _require_k1(C, "analyze")
    report = find_stable_assortative(C)
    matching = mu if mu is not None else EarlyMatching(C.n)
    verdict = check_early_matching_stable(C, matching)
    arrangement = list(report.stable_arrangement.staying_ranks) if report.stable_arrangement else None
    stable_matching = (
        arrangement_to_matching(report.stable_arrangement, C.n) if report.stable_arrangement else None
    )
    return {
        "chaotic": report.chaotic,
        "arrangement": arrangement,
        "arrangements_found": report.arrangements_found,
        "stable_matching": [list(p) for p in stable_matching.pairs] if stable_matching else None,
        "matching": [list(p) for p in matching.pairs],
        "stable": verdict.stable,
        "witness": asdict(verdict.witness) if verdict.witness else None,
        "near_indifference": list(verdict.near_indifference),
    }
