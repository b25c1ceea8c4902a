"""
Second-period expected-match payoffs.

k = 1 is handled in closed form. A staying agent with own-side CDF value q and
equal-rank partner type w (neighbours w₋ and w₊ on the other side) ends up with

    U = w − (1 − q)·∫_{w₋}^{w} G dx + q·∫_{w}^{w₊} (1 − G) dx

where the first integral is the weighted downside (the entrant lands above him and
an entrant woman slips in below w) and the second the weighted upside. The
predicates compare these two integrals directly instead of subtracting payoffs.

General k goes through direct simulation of the second-period assortative match.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from unraveling_pipeline.dist_core import ArrayLike, SeededSampler, TypeDistribution
from unraveling_pipeline.errors import DomainError
from unraveling_pipeline.helper import Moments, plan_blocks, run_blocks
from unraveling_pipeline.market_model import StayList

LOGGER = logging.getLogger("PayoffEngine")

EXACT_TOLERANCE = 1e-12
MC_BLOCK_SIZE = 50_000
SIDES = ("man", "woman")


@dataclass(frozen=True)
class PayoffQuery:
    stay: StayList
    side: str
    rank_in_stay: int
    own_type: float

    def __post_init__(self) -> None:
        if self.side not in SIDES:
            raise DomainError(f"side: expected one of {SIDES}, got {self.side!r}")
        size = len(self.stay)
        if not 1 <= self.rank_in_stay <= size:
            raise DomainError(f"rank_in_stay: {self.rank_in_stay} outside 1..{size}")
        if abs(self.own_list[self.rank_in_stay - 1] - self.own_type) > 1e-12:
            raise DomainError("own_type: does not match the stay-list entry at rank_in_stay")

    @classmethod
    def at(cls, stay: StayList, side: str, rank_in_stay: int) -> "PayoffQuery":
        """Query for the agent sitting at `rank_in_stay`; own_type is read off the list."""
        own = stay.men_staying if side == "man" else stay.women_staying
        if not 1 <= rank_in_stay <= len(own):
            raise DomainError(f"rank_in_stay: {rank_in_stay} outside 1..{len(own)}")
        return cls(stay, side, rank_in_stay, own[rank_in_stay - 1])

    @property
    def own_list(self) -> Tuple[float, ...]:
        return self.stay.men_staying if self.side == "man" else self.stay.women_staying

    @property
    def partner_list(self) -> Tuple[float, ...]:
        return self.stay.women_staying if self.side == "man" else self.stay.men_staying


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int


# ---------------------------------------------------------------------------#
#                       CLOSED FORM (k = 1)                                   #
# ---------------------------------------------------------------------------#
def downside_upside(
    own_cdf: ArrayLike,
    partner: TypeDistribution,
    w: ArrayLike,
    w_lo: ArrayLike,
    w_hi: ArrayLike,
) -> Tuple[ArrayLike, ArrayLike]:
    """Weighted downside (1−q)∫_{w₋}^{w} G and upside q∫_{w}^{w₊}(1−G); numpy-broadcasting."""
    I = partner.cdf_integral
    downside = (1.0 - own_cdf) * (I(w) - I(w_lo))
    upside = own_cdf * ((w_hi - w) - (I(w_hi) - I(w)))
    return downside, upside


def _neighbours(q: PayoffQuery, partner: TypeDistribution) -> Tuple[float, float, float]:
    others = q.partner_list
    p = q.rank_in_stay
    w = others[p - 1]
    w_lo = others[p - 2] if p > 1 else partner.lower
    w_hi = others[p] if p < len(others) else partner.upper
    return w, w_lo, w_hi


def payoff_margin(q: PayoffQuery, partner_type: float, partner: TypeDistribution, own: TypeDistribution) -> float:
    """
    partner_type − expected match. Positive means the agent strictly gains by
    leaving with `partner_type` now. No bracket check: stability uses it for
    cross-rank partners.
    """
    w, w_lo, w_hi = _neighbours(q, partner)
    downside, upside = downside_upside(own.cdf(q.own_type), partner, w, w_lo, w_hi)
    return float(downside - upside + (partner_type - w))


def _expected_match(q: PayoffQuery, partner: TypeDistribution, own: TypeDistribution) -> float:
    w, w_lo, w_hi = _neighbours(q, partner)
    downside, upside = downside_upside(own.cdf(q.own_type), partner, w, w_lo, w_hi)
    return float(w - downside + upside)


def expected_match_man_k1(q: PayoffQuery, G: TypeDistribution, F: TypeDistribution) -> float:
    """U(m, L); G is the women's law, F the men's."""
    if q.side != "man":
        raise DomainError("side: expected_match_man_k1 needs a man query")
    return _expected_match(q, G, F)


def expected_match_woman_k1(q: PayoffQuery, F: TypeDistribution, G: TypeDistribution) -> float:
    """V(w, L); F is the men's law, G the women's."""
    if q.side != "woman":
        raise DomainError("side: expected_match_woman_k1 needs a woman query")
    return _expected_match(q, F, G)


def _prefers_early(q: PayoffQuery, partner_type: float, partner: TypeDistribution, own: TypeDistribution) -> bool:
    _, w_lo, w_hi = _neighbours(q, partner)
    if not w_lo <= partner_type <= w_hi:
        raise DomainError(
            f"partner_type: {partner_type} outside the bracket [{w_lo}, {w_hi}] of the stay list"
        )
    return payoff_margin(q, partner_type, partner, own) > EXACT_TOLERANCE


def man_prefers_early_k1(q: PayoffQuery, partner_type: float, F: TypeDistribution, G: TypeDistribution) -> bool:
    if q.side != "man":
        raise DomainError("side: man_prefers_early_k1 needs a man query")
    return _prefers_early(q, partner_type, G, F)


def woman_prefers_early_k1(q: PayoffQuery, partner_type: float, F: TypeDistribution, G: TypeDistribution) -> bool:
    if q.side != "woman":
        raise DomainError("side: woman_prefers_early_k1 needs a woman query")
    return _prefers_early(q, partner_type, F, G)


def region_membership_1x1(m: ArrayLike, w: ArrayLike) -> ArrayLike:
    """Uniform n = k = 1: both members of the single couple strictly prefer to exit."""
    m = np.asarray(m, dtype=float)
    w = np.asarray(w, dtype=float)
    inside = ((1.0 - m) * w * w > m * (1.0 - w) ** 2) & ((1.0 - w) * m * m > w * (1.0 - m) ** 2)
    return bool(inside) if inside.ndim == 0 else inside


def full_stay_unravel_mask(
    men: np.ndarray,
    women: np.ndarray,
    dist_men: TypeDistribution,
    dist_women: TypeDistribution,
) -> np.ndarray:
    """
    k = 1, everyone else waiting: True at rank j when man j and woman j both
    strictly prefer to exit together. Works on (..., n) batches of realizations.
    """
    men = np.asarray(men, dtype=float)
    women = np.asarray(women, dtype=float)

    def side(own: np.ndarray, other: np.ndarray, own_dist: TypeDistribution, other_dist: TypeDistribution) -> np.ndarray:
        lo = np.concatenate([np.full(other.shape[:-1] + (1,), other_dist.lower), other[..., :-1]], axis=-1)
        hi = np.concatenate([other[..., 1:], np.full(other.shape[:-1] + (1,), other_dist.upper)], axis=-1)
        downside, upside = downside_upside(own_dist.cdf(own), other_dist, other, lo, hi)
        return (downside - upside) > EXACT_TOLERANCE

    if men.shape[-1] == 0:
        return np.zeros(men.shape, dtype=bool)
    return side(men, women, dist_men, dist_women) & side(women, men, dist_women, dist_men)


# ---------------------------------------------------------------------------#
#                       MONTE CARLO (general k)                               #
# ---------------------------------------------------------------------------#
def simulate_partners(
    own_list: np.ndarray,
    partner_list: np.ndarray,
    positions: np.ndarray,
    k: int,
    own_dist: TypeDistribution,
    partner_dist: TypeDistribution,
    samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Second-period partner types of the agents at `positions` (1-based) after k
    entrants join each side. Returns shape (samples, len(positions)); all
    positions share the same entrant draws.
    """
    positions = np.asarray(positions, dtype=int)
    own_types = np.asarray(own_list, dtype=float)[positions - 1]
    entrants_own = own_dist.quantile(rng.random((samples, k)))
    entrants_partner = partner_dist.quantile(rng.random((samples, k)))
    below = (entrants_own[:, :, None] < own_types[None, None, :]).sum(axis=1)
    new_rank = positions[None, :] + below
    merged = np.sort(
        np.concatenate([np.broadcast_to(partner_list, (samples, len(partner_list))), entrants_partner], axis=1),
        axis=1,
    )
    return np.take_along_axis(merged, new_rank - 1, axis=1)


def _mc_block(
    own_list: np.ndarray,
    partner_list: np.ndarray,
    rank: int,
    k: int,
    own_dist: TypeDistribution,
    partner_dist: TypeDistribution,
    master_seed: int,
    stream: int,
    block: int,
    size: int,
) -> Moments:
    rng = SeededSampler(master_seed, stream).block_generator(block)
    draws = simulate_partners(own_list, partner_list, np.array([rank]), k, own_dist, partner_dist, size, rng)
    return Moments.of(draws[:, 0])


def expected_match_mc(
    q: PayoffQuery,
    k: int,
    reps: int,
    s: SeededSampler,
    F: TypeDistribution,
    G: TypeDistribution,
    threads: int = 1,
) -> McEstimate:
    """
    Simulated expected partner type of the queried agent; F men's law, G women's.
    Reps are split into fixed blocks with their own streams, so the estimate does
    not depend on `threads`.
    """
    if reps < 1:
        raise DomainError("reps: must be at least 1")
    if k < 0:
        raise DomainError("k: must be non-negative")
    partner_list = np.asarray(q.partner_list, dtype=float)
    if k == 0:
        return McEstimate(float(partner_list[q.rank_in_stay - 1]), 0.0, reps)

    own_dist, partner_dist = (F, G) if q.side == "man" else (G, F)
    task = functools.partial(
        _mc_block,
        np.asarray(q.own_list, dtype=float),
        partner_list,
        q.rank_in_stay,
        k,
        own_dist,
        partner_dist,
        s.master_seed,
        s.stream_index,
    )
    moments = Moments()
    for part in run_blocks(task, plan_blocks(reps, MC_BLOCK_SIZE), threads):
        moments = moments.merge(part)
    LOGGER.debug("MC payoff side=%s rank=%d k=%d reps=%d mean=%.6f", q.side, q.rank_in_stay, k, reps, moments.mean)
    return McEstimate(moments.mean, moments.std_error, moments.count)


def full_stay_unravel_mask_mc(
    men: np.ndarray,
    women: np.ndarray,
    dist_men: TypeDistribution,
    dist_women: TypeDistribution,
    k: int,
    inner_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    General-k version of `full_stay_unravel_mask` for one realization: a couple
    unravels when both simulated expected matches fall strictly below the
    equal-rank partner's type.
    """
    men = np.asarray(men, dtype=float)
    women = np.asarray(women, dtype=float)
    n = men.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    if k == 0:
        return np.zeros(n, dtype=bool)
    positions = np.arange(1, n + 1)
    men_exp = simulate_partners(men, women, positions, k, dist_men, dist_women, inner_samples, rng).mean(axis=0)
    women_exp = simulate_partners(women, men, positions, k, dist_women, dist_men, inner_samples, rng).mean(axis=0)
    return (men_exp < women) & (women_exp < men)

