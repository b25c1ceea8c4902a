import itertools
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unraveling_pipeline import arrangements
from unraveling_pipeline.arrangements import DP_CELLS_PER_BATCH, dp_batch_size
from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import DomainError
from unraveling_pipeline.limit_model import (
    GapVector,
    check_gaps_stable,
    enumerate_stable_gap_arrangements,
    estimate_eta,
    estimate_pi,
    estimate_zeta,
    eta_1_from_zeta_1,
    eta_event,
    find_stable_gap_arrangement,
    local_gaps,
    recursive_bound_roots,
    recursive_pi_bound,
)
from unraveling_pipeline.market_model import MarketRealization

RUN_SLOW = os.environ.get("RUN_SLOW_EXPERIMENTS", "").lower() == "true"


def test_check_gaps_stable_examples():
    rising = GapVector((1.0, 2.0), (1.0, 2.0))
    assert check_gaps_stable(rising, {1})
    assert not check_gaps_stable(rising, set())
    falling = GapVector((2.0, 1.0), (2.0, 1.0))
    assert check_gaps_stable(falling, set())


def test_check_gaps_stable_index_range():
    g = GapVector((1.0, 2.0, 3.0), (1.0, 2.0, 3.0))
    with pytest.raises(DomainError):
        check_gaps_stable(g, {3})
    with pytest.raises(DomainError):
        check_gaps_stable(g, {0})


def test_gap_vector_validation():
    with pytest.raises(DomainError):
        GapVector((1.0,), (1.0, 2.0))
    with pytest.raises(DomainError):
        GapVector((1.0, 0.0), (1.0, 2.0))
    with pytest.raises(DomainError):
        GapVector((), ())


def test_single_gap_always_has_empty_arrangement():
    assert find_stable_gap_arrangement(GapVector((0.3,), (5.0,))) == ()


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0)))
def test_two_gaps_always_admit_an_arrangement(values):
    g = GapVector(values[:2], values[2:])
    assert len(enumerate_stable_gap_arrangements(g)) >= 1


def test_dp_matches_enumeration_on_gaps():
    rng = np.random.default_rng(14)
    for _ in range(300):
        r = int(rng.integers(1, 11))
        g = GapVector(tuple(rng.exponential(size=r)), tuple(rng.exponential(size=r)))
        listed = enumerate_stable_gap_arrangements(g)
        # disjointness: at most one stable arrangement per draw
        assert len(listed) <= 1
        found = find_stable_gap_arrangement(g)
        assert (found is None) == (not listed)
        if listed:
            assert found == listed[0]
            assert check_gaps_stable(g, found)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(min_value=1, max_value=20), min_size=1, max_size=7),
    st.data(),
    st.sampled_from([0.125, 0.5, 2.0, 16.0]),
)
def test_gap_verdicts_are_scale_invariant(men, data, factor):
    women = data.draw(st.lists(st.integers(1, 20), min_size=len(men), max_size=len(men)))
    g = GapVector(tuple(men), tuple(women))
    for scaled in (g.scaled(men_factor=factor), g.scaled(women_factor=factor)):
        for size in range(g.r):
            for I in itertools.combinations(range(1, g.r), size):
                assert check_gaps_stable(g, I) == check_gaps_stable(scaled, I)


def test_gap_verdicts_survive_generic_scaling():
    rng = np.random.default_rng(31)
    for _ in range(200):
        r = int(rng.integers(1, 8))
        g = GapVector(tuple(rng.exponential(size=r)), tuple(rng.exponential(size=r)))
        assert find_stable_gap_arrangement(g) == find_stable_gap_arrangement(g.scaled(men_factor=3.7))


def test_local_gaps_window():
    market = MarketRealization.of_pairs([(0.1, 0.2), (0.4, 0.5), (0.7, 0.9)])
    g = local_gaps(market, 1, 2)
    assert g.men_gaps == pytest.approx((0.3, 0.3))
    assert g.women_gaps == pytest.approx((0.3, 0.4))
    top = local_gaps(market, 3, 1)
    assert top.men_gaps == pytest.approx((0.3,))
    with pytest.raises(DomainError):
        local_gaps(market, 3, 2)


def test_pi_is_one_for_short_windows():
    assert estimate_pi(1, 2_000, SeededSampler(1)).value == 1.0
    assert estimate_pi(2, 2_000, SeededSampler(2)).value == 1.0


def test_pi_seven_near_reference():
    est = estimate_pi(7, 20_000, SeededSampler(7))
    assert est.value == pytest.approx(0.595, abs=0.015)
    assert est.quantity == "pi" and est.r == 7 and est.seed == 7


def test_pi_is_identical_across_worker_counts():
    serial = estimate_pi(5, 12_000, SeededSampler(3), threads=1)
    parallel = estimate_pi(5, 12_000, SeededSampler(3), threads=2)
    assert serial == parallel


def test_pi_sub_batches_leave_the_estimate_unchanged(monkeypatch):
    baseline = estimate_pi(7, 2_000, SeededSampler(13))
    monkeypatch.setattr(arrangements, "DP_CELLS_PER_BATCH", 100)
    assert dp_batch_size(6) == 1
    assert estimate_pi(7, 2_000, SeededSampler(13)) == baseline


def test_pi_batches_are_sized_from_the_window():
    for r in (2, 60, 200):
        assert dp_batch_size(r - 1) * (r + 1) ** 2 <= max(DP_CELLS_PER_BATCH, (r + 1) ** 2)
    est = estimate_pi(60, 200, SeededSampler(60))
    assert 0.0 <= est.value <= 1.0
    assert est.reps == 200


def test_estimators_validate_arguments():
    with pytest.raises(DomainError):
        estimate_pi(0, 10, SeededSampler(1))
    with pytest.raises(DomainError):
        estimate_zeta(1, 0, SeededSampler(1))
    with pytest.raises(DomainError):
        estimate_eta(1, 10, SeededSampler(1), variant="mirrored")
    with pytest.raises(DomainError):
        eta_event(*(np.ones(1),) * 6, variant="mirrored")


def test_zeta_one_and_eta_one():
    zeta = estimate_zeta(1, 1_000_000, SeededSampler(11))
    assert zeta.value == pytest.approx(0.2176, abs=0.002)
    eta = estimate_eta(1, 1_000_000, SeededSampler(12))
    assert eta.value == pytest.approx(0.0760, abs=0.002)


def test_extreme_limits_second_rank():
    assert estimate_eta(2, 1_000_000, SeededSampler(22)).value == pytest.approx(0.1271, abs=0.005)
    assert estimate_zeta(5, 1_000_000, SeededSampler(55)).value == pytest.approx(0.2310, abs=0.005)


def test_printed_eta_variant_misses_reference_value():
    symmetric = estimate_eta(1, 200_000, SeededSampler(31))
    printed = estimate_eta(1, 200_000, SeededSampler(31), variant="printed")
    assert symmetric.value == pytest.approx(0.0760, abs=0.005)
    assert printed.value - 0.0760 > 0.02


def test_eta_one_closed_form():
    assert eta_1_from_zeta_1(0.217602) == pytest.approx(0.0760, abs=1e-4)


def test_recursive_bound():
    assert recursive_pi_bound(0.595, 2) == pytest.approx(0.559981, abs=1e-6)
    low, high = recursive_bound_roots()
    assert low == pytest.approx(0.0526089, abs=1e-6)
    assert high == pytest.approx(0.639699, abs=1e-6)
    with pytest.raises(DomainError):
        recursive_pi_bound(1.5, 2)


def test_pi_decreases_and_respects_recursive_bound():
    if not RUN_SLOW:
        pytest.skip("Set RUN_SLOW_EXPERIMENTS=true to run the long limit-model estimates")
    pi_7 = estimate_pi(7, 1_000_000, SeededSampler(70), threads=4)
    pi_12 = estimate_pi(12, 1_000_000, SeededSampler(120), threads=4)
    assert pi_7.value == pytest.approx(0.595, abs=0.01)
    assert pi_12.value + 3 * pi_12.std_error < pi_7.value - 3 * pi_7.std_error
    pi_18 = estimate_pi(18, 1_000_000, SeededSampler(180), threads=4)
    assert pi_18.value <= 0.56 + 3 * pi_18.std_error


def test_extreme_limits_at_long_range():
    if not RUN_SLOW:
        pytest.skip("Set RUN_SLOW_EXPERIMENTS=true to run the long limit-model estimates")
    assert estimate_zeta(5, 10_000_000, SeededSampler(5), threads=4).value == pytest.approx(0.2310, abs=0.002)
    assert estimate_zeta(500, 1_000_000, SeededSampler(500)).value == pytest.approx(0.25, abs=0.01)
    assert estimate_eta(500, 1_000_000, SeededSampler(501)).value == pytest.approx(0.25, abs=0.01)


def test_dp_matches_enumeration_on_gaps_at_full_scale():
    if not RUN_SLOW:
        pytest.skip("Set RUN_SLOW_EXPERIMENTS=true to run the long limit-model estimates")
    rng = np.random.default_rng(1414)
    for _ in range(10_000):
        r = int(rng.integers(1, 15))
        g = GapVector(tuple(rng.exponential(size=r)), tuple(rng.exponential(size=r)))
        listed = enumerate_stable_gap_arrangements(g)
        assert len(listed) <= 1
        assert find_stable_gap_arrangement(g) == (listed[0] if listed else None)
