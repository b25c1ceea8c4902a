import os

import numpy as np
import pytest

from unraveling_pipeline.dist_core import SeededSampler, TypeDistribution
from unraveling_pipeline.errors import PreconditionError, ResourceGuardError, UnsupportedConfigurationError
from unraveling_pipeline.market_model import (
    AssortativeArrangement,
    EarlyMatching,
    MarketRealization,
    arrangement_to_matching,
    sample_realization,
)
from unraveling_pipeline.stability import (
    BlockingPairWitness,
    DeviationWitness,
    _partial_injections,
    analysis_report,
    check_assortative_stable,
    check_early_matching_stable,
    find_stable_assortative,
    find_stable_bruteforce_assortative,
    find_stable_bruteforce_full,
    is_chaotic,
    uncross,
    witness_holds,
)

U = TypeDistribution.uniform()
CHAOTIC = MarketRealization.of_pairs([(0.4, 0.4), (0.6, 0.6)])
HIGH = MarketRealization.of_pairs([(0.6, 0.6)])
LOW = MarketRealization.of_pairs([(0.4, 0.4)])

RUN_SLOW = os.environ.get("RUN_SLOW_EXPERIMENTS", "").lower() == "true"


def random_market(n, seed):
    return sample_realization(n, 1, U, U, SeededSampler(seed))


def test_everyone_waiting_is_blocked_by_bottom_couple():
    mu = EarlyMatching(2)
    verdict = check_early_matching_stable(CHAOTIC, mu)
    assert not verdict.stable
    assert isinstance(verdict.witness, BlockingPairWitness)
    assert (verdict.witness.man_rank, verdict.witness.woman_rank) == (1, 1)
    assert verdict.witness.man_margin == pytest.approx(0.008)
    assert witness_holds(CHAOTIC, mu, verdict.witness)


def test_both_couples_exiting_loses_the_bottom_couple():
    mu = EarlyMatching.from_map(2, {1: 1, 2: 2})
    verdict = check_early_matching_stable(CHAOTIC, mu)
    assert not verdict.stable
    assert isinstance(verdict.witness, DeviationWitness)
    assert (verdict.witness.side, verdict.witness.rank, verdict.witness.partner_rank) == ("man", 1, 1)
    assert verdict.witness.margin == pytest.approx(-0.024)
    assert witness_holds(CHAOTIC, mu, verdict.witness)


def test_bottom_exit_is_blocked_by_top_couple():
    mu = EarlyMatching.from_map(2, {1: 1})
    verdict = check_early_matching_stable(CHAOTIC, mu)
    assert not verdict.stable
    assert verdict.witness == BlockingPairWitness(2, 2, verdict.witness.man_margin, verdict.witness.woman_margin)
    assert verdict.witness.man_margin == pytest.approx(0.024)
    assert witness_holds(CHAOTIC, mu, verdict.witness)


def test_witness_holds_rejects_fabricated_evidence():
    mu = EarlyMatching.from_map(2, {1: 1})
    assert not witness_holds(CHAOTIC, mu, DeviationWitness("man", 1, 1))
    assert not witness_holds(CHAOTIC, mu, BlockingPairWitness(1, 1))


def test_stability_rejects_other_k():
    market = MarketRealization.of_pairs([(0.4, 0.4)], k=2)
    with pytest.raises(UnsupportedConfigurationError):
        check_early_matching_stable(market, EarlyMatching(1))
    with pytest.raises(UnsupportedConfigurationError):
        is_chaotic(market)


def test_single_couple_arrangements():
    assert not check_assortative_stable(HIGH, AssortativeArrangement((1,))).stable
    assert check_assortative_stable(HIGH, AssortativeArrangement(())).stable
    verdict = check_assortative_stable(LOW, AssortativeArrangement(()))
    assert not verdict.stable
    assert verdict.witness == DeviationWitness("man", 1, 1, verdict.witness.margin)


def test_find_stable_assortative_examples():
    assert find_stable_assortative(CHAOTIC).chaotic
    high = find_stable_assortative(HIGH)
    assert not high.chaotic
    assert high.stable_arrangement == AssortativeArrangement(())
    assert high.arrangements_found == 1
    assert find_stable_assortative(LOW).stable_arrangement == AssortativeArrangement((1,))


def test_bruteforce_examples():
    assert find_stable_bruteforce_assortative(CHAOTIC) == []
    assert find_stable_bruteforce_assortative(HIGH) == [AssortativeArrangement(())]
    assert find_stable_bruteforce_full(CHAOTIC) is None
    assert find_stable_bruteforce_full(HIGH) == EarlyMatching.from_map(1, {1: 1})


def test_bruteforce_guards():
    with pytest.raises(ResourceGuardError):
        find_stable_bruteforce_full(random_market(6, 0))
    with pytest.raises(ResourceGuardError):
        find_stable_bruteforce_assortative(random_market(21, 0))


def test_is_chaotic_examples():
    assert is_chaotic(CHAOTIC)
    assert not is_chaotic(HIGH)
    assert not is_chaotic(LOW)


def test_dp_agrees_with_bruteforce_and_uniqueness():
    for seed in range(400):
        market = random_market(1 + seed % 10, seed)
        report = find_stable_assortative(market)
        listed = find_stable_bruteforce_assortative(market)
        assert len(listed) <= 1
        assert report.arrangements_found == len(listed)
        if listed:
            assert report.stable_arrangement == listed[0]
        else:
            assert report.chaotic


def test_assortative_existence_matches_full_enumeration():
    for seed in range(120):
        market = random_market(1 + seed % 4, 1000 + seed)
        full = find_stable_bruteforce_full(market)
        assert (full is None) == is_chaotic(market)


def test_found_arrangement_passes_general_check():
    for seed in range(100):
        market = random_market(2 + seed % 6, 5000 + seed)
        report = find_stable_assortative(market)
        if report.chaotic:
            continue
        mu = arrangement_to_matching(report.stable_arrangement, market.n)
        assert check_early_matching_stable(market, mu).stable


def test_unstable_witnesses_reverify():
    rng = np.random.default_rng(8)
    checked = 0
    for seed in range(60):
        market = random_market(3, 7000 + seed)
        order = rng.permutation(3) + 1
        mu = EarlyMatching.from_map(3, {1: int(order[0]), 2: None, 3: int(order[2])})
        verdict = check_early_matching_stable(market, mu)
        if not verdict.stable:
            assert witness_holds(market, mu, verdict.witness)
            checked += 1
    assert checked > 0


def test_uncross_examples():
    assortative = EarlyMatching.from_map(4, {2: 2, 3: 3})
    market = random_market(4, 3)
    assert uncross(market, assortative) == assortative
    crossed = EarlyMatching.from_map(4, {2: 3, 3: 2})
    fixed = uncross(market, crossed)
    assert fixed.pairs == ((2, 2), (3, 3))
    assert fixed.crossings() == 0

    tangled = EarlyMatching.from_map(5, {1: 4, 2: 1, 4: 5, 5: 2})
    out = uncross(random_market(5, 4), tangled)
    assert out.crossings() == 0
    assert out.is_assortative()
    assert set(out.early_men) == {1, 2, 4, 5}


def test_uncross_preserves_stability():
    checked = 0
    for seed in range(400):
        n = 3 + seed % 2
        market = random_market(n, 9000 + seed)
        for mapping in _partial_injections(n):
            mu = EarlyMatching.from_map(n, mapping)
            if mu.is_assortative() or set(mu.early_men) != set(mu.early_women):
                continue
            if not check_early_matching_stable(market, mu).stable:
                continue
            fixed = uncross(market, mu)
            assert fixed.is_assortative()
            assert check_early_matching_stable(market, fixed).stable
            checked += 1
    assert checked > 0


def test_uncross_requires_aligned_blocks():
    with pytest.raises(PreconditionError):
        uncross(CHAOTIC, EarlyMatching.from_map(2, {1: 2}))


def test_analysis_report_shape():
    report = analysis_report(CHAOTIC)
    assert report["chaotic"] is True
    assert report["arrangement"] is None
    assert report["stable"] is False
    assert report["witness"]["kind"] == "blocking_pair"

    report = analysis_report(HIGH, EarlyMatching.from_map(1, {1: 1}))
    assert report["chaotic"] is False
    assert report["arrangement"] == []
    assert report["stable_matching"] == [[1, 1]]
    assert report["stable"] is True
    assert report["witness"] is None


def test_dp_agrees_with_bruteforce_at_full_scale():
    if not RUN_SLOW:
        pytest.skip("Set RUN_SLOW_EXPERIMENTS=true to run the full-scale oracle comparisons")
    for seed in range(10_000):
        market = random_market(1 + seed % 12, 100_000 + seed)
        listed = find_stable_bruteforce_assortative(market)
        assert len(listed) <= 1
        report = find_stable_assortative(market)
        assert report.stable_arrangement == (listed[0] if listed else None)


def test_full_enumeration_at_full_scale():
    if not RUN_SLOW:
        pytest.skip("Set RUN_SLOW_EXPERIMENTS=true to run the full-scale oracle comparisons")
    for seed in range(1_000):
        market = random_market(1 + seed % 4, 200_000 + seed)
        assert (find_stable_bruteforce_full(market) is None) == is_chaotic(market)
