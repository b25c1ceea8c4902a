import numpy as np
import pytest

from unraveling_pipeline.dist_core import SeededSampler, TypeDistribution
from unraveling_pipeline.errors import ConfigurationError, DomainError, PreconditionError
from unraveling_pipeline.market_model import (
    AssortativeArrangement,
    EarlyMatching,
    MarketRealization,
    StayList,
    arrangement_to_matching,
    draw_type_batch,
    sample_realization,
    stay_list,
    stay_list_with_pair,
    with_bounds,
)

CHAOTIC = MarketRealization.of_pairs([(0.4, 0.4), (0.6, 0.6)])


def test_stay_list_everyone_waits():
    stay = stay_list(CHAOTIC, EarlyMatching(2))
    assert stay.men_staying == (0.4, 0.6)
    assert stay.women_staying == (0.4, 0.6)
    assert len(stay) == 2


def test_stay_list_after_bottom_couple_exits():
    stay = stay_list(CHAOTIC, EarlyMatching.from_map(2, {1: 1}))
    assert stay.men_staying == (0.6,)
    assert stay.women_staying == (0.6,)
    assert stay.men_ranks == (2,)


def test_stay_list_crossed_matching_empties_market():
    stay = stay_list(CHAOTIC, EarlyMatching.from_map(2, {1: 2, 2: 1}))
    assert len(stay) == 0


def test_stay_list_with_pair_reinserts_the_couple():
    both = EarlyMatching.from_map(2, {1: 1, 2: 2})
    top = stay_list_with_pair(CHAOTIC, both, 2)
    assert top.men_staying == (0.6,) and top.women_staying == (0.6,)
    bottom = stay_list_with_pair(CHAOTIC, both, 1)
    assert bottom.men_staying == (0.4,) and bottom.women_staying == (0.4,)

    only_top = EarlyMatching.from_map(2, {2: 2})
    full = stay_list_with_pair(CHAOTIC, only_top, 2)
    assert full.men_staying == (0.4, 0.6)
    assert full.position_of_man(2) == 2
    assert full.position_of_woman(2) == 2


def test_stay_list_with_pair_requires_early_man():
    with pytest.raises(PreconditionError):
        stay_list_with_pair(CHAOTIC, EarlyMatching.from_map(2, {2: 2}), 1)


def test_matching_rejects_bad_ranks():
    with pytest.raises(DomainError):
        EarlyMatching(2, ((3, 1),))
    with pytest.raises(DomainError):
        EarlyMatching(2, ((1, 1), (2, 1)))
    with pytest.raises(DomainError):
        stay_list(CHAOTIC, EarlyMatching(3))


def test_matching_views():
    mu = EarlyMatching.from_map(4, {1: 2, 2: None, 3: 1})
    assert mu.pairs == ((1, 2), (3, 1))
    assert mu.partner_of(3) == 1
    assert mu.partner_of(2) is None
    assert mu.as_dict() == {1: 2, 2: None, 3: 1, 4: None}
    assert mu.early_women == [1, 2]
    assert not mu.is_assortative()
    assert mu.crossings() == 1


@pytest.mark.parametrize(
    "staying, expected",
    [
        ((1, 2, 3), ()),
        ((), ((1, 1), (2, 2), (3, 3))),
        ((2,), ((1, 1), (3, 3))),
    ],
)
def test_arrangement_to_matching(staying, expected):
    mu = arrangement_to_matching(AssortativeArrangement(staying), 3)
    assert mu.pairs == expected
    assert mu.is_assortative()


def test_arrangement_validation():
    with pytest.raises(DomainError):
        AssortativeArrangement((2, 1))
    with pytest.raises(DomainError):
        arrangement_to_matching(AssortativeArrangement((4,)), 3)


def test_realization_validation_messages():
    with pytest.raises(ConfigurationError, match="men: must be sorted ascending"):
        MarketRealization.of_pairs([(0.6, 0.4), (0.4, 0.6)])
    with pytest.raises(ConfigurationError, match="women"):
        MarketRealization.of_pairs([(0.4, 1.4)])
    with pytest.raises(ConfigurationError, match="expected 2"):
        MarketRealization(2, 1, (0.1,), (0.1, 0.2), TypeDistribution.uniform(), TypeDistribution.uniform())


def test_stay_list_of_pairs_sorts_each_side():
    stay = StayList.of_pairs([(0.6, 0.2), (0.4, 0.8)])
    assert stay.men_staying == (0.4, 0.6)
    assert stay.women_staying == (0.2, 0.8)


def test_sampling_is_deterministic_and_sorted():
    d = TypeDistribution.uniform()
    first = sample_realization(6, 1, d, d, SeededSampler(5))
    again = sample_realization(6, 1, d, d, SeededSampler(5))
    assert first == again
    assert list(first.men) == sorted(first.men)

    men, women = draw_type_batch(4, 3, d, d, np.random.default_rng(0))
    assert men.shape == (3, 4) and women.shape == (3, 4)
    assert np.all(np.diff(men, axis=1) >= 0)


def test_with_bounds_pads_support():
    padded = with_bounds(np.array([[0.2, 0.5]]), TypeDistribution.uniform(0.0, 2.0))
    assert padded.tolist() == [[0.0, 0.2, 0.5, 2.0]]
