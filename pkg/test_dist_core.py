import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from unraveling_pipeline.dist_core import (
    SeededSampler,
    TypeDistribution,
    cdf,
    cdf_integral,
    quantile,
    sample_sorted,
)
from unraveling_pipeline.errors import ConfigurationError, DomainError

UNIFORM = TypeDistribution.uniform()
KINKED = TypeDistribution.piecewise_linear([(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)])


def test_uniform_cdf():
    assert cdf(UNIFORM, 0.4) == pytest.approx(0.4)
    assert cdf(UNIFORM, 0.0) == 0.0
    # outside the support clamps
    assert cdf(UNIFORM, -1.0) == 0.0
    assert cdf(UNIFORM, 2.0) == 1.0


def test_piecewise_cdf_interpolates():
    assert cdf(KINKED, 0.25) == pytest.approx(0.4)
    assert cdf(KINKED, 0.75) == pytest.approx(0.9)


def test_cdf_integral_closed_form():
    assert cdf_integral(UNIFORM, 0.4) == pytest.approx(0.08)
    assert cdf_integral(UNIFORM, 1.0) == pytest.approx(0.5)
    assert cdf_integral(KINKED, KINKED.lower) == 0.0
    # 0.5 * 0.8 / 2 + 0.5 * (0.8 + 1.0) / 2
    assert cdf_integral(KINKED, 1.0) == pytest.approx(0.65)


def test_quantile_bounds_and_domain():
    assert quantile(UNIFORM, 0.25) == pytest.approx(0.25)
    assert quantile(KINKED, 0.0) == KINKED.lower
    assert quantile(KINKED, 1.0) == KINKED.upper
    with pytest.raises(DomainError):
        quantile(UNIFORM, 1.2)
    with pytest.raises(DomainError):
        quantile(UNIFORM, -0.1)


def test_density_is_piecewise_constant():
    assert KINKED.density(0.25) == pytest.approx(1.6)
    assert KINKED.density(0.75) == pytest.approx(0.4)
    assert KINKED.density(1.5) == 0.0


def test_array_inputs_keep_shape():
    grid = np.linspace(0.0, 1.0, 7).reshape(7, 1)
    assert np.asarray(cdf(KINKED, grid)).shape == (7, 1)
    assert np.asarray(cdf_integral(KINKED, grid)).shape == (7, 1)


@pytest.mark.parametrize("dist", [UNIFORM, KINKED, TypeDistribution.uniform(2.0, 5.0)])
def test_cdf_integral_derivative_is_cdf(dist):
    lo, hi = dist.support
    grid = np.linspace(lo, hi, 102)[1:-1] + 1e-3 * (hi - lo) / 7
    h = 1e-6
    numeric = (dist.cdf_integral(grid + h) - dist.cdf_integral(grid - h)) / (2 * h)
    assert np.max(np.abs(numeric - dist.cdf(grid))) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1.0 - 1e-6))
def test_quantile_inverts_cdf(t):
    assert quantile(KINKED, cdf(KINKED, t)) == pytest.approx(t, abs=1e-9)


def test_malformed_distributions_raise_configuration_error():
    with pytest.raises(ConfigurationError, match="knots"):
        TypeDistribution.piecewise_linear([(0.0, 0.0), (0.5, 0.9), (0.4, 1.0)])
    with pytest.raises(ConfigurationError, match="knots"):
        TypeDistribution.piecewise_linear([(0.0, 0.1), (1.0, 1.0)])
    with pytest.raises(ConfigurationError, match="family"):
        TypeDistribution.from_dict({"family": "pareto"})
    with pytest.raises(ConfigurationError, match="upper"):
        TypeDistribution.uniform(1.0, 1.0)


def test_distribution_json_round_trip():
    assert TypeDistribution.from_dict(UNIFORM.to_dict()) == UNIFORM
    assert TypeDistribution.from_dict(KINKED.to_dict()) == KINKED


def test_sample_sorted_contract():
    assert sample_sorted(UNIFORM, 0, SeededSampler(1)).size == 0
    first = sample_sorted(KINKED, 500, SeededSampler(7, 3))
    again = sample_sorted(KINKED, 500, SeededSampler(7, 3))
    other = sample_sorted(KINKED, 500, SeededSampler(7, 4))
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)
    assert np.all(np.diff(first) >= 0)
    assert KINKED.contains(first)
    with pytest.raises(DomainError):
        sample_sorted(UNIFORM, -1, SeededSampler(1))


def test_sample_sorted_is_uniform_by_ks():
    passed = 0
    for seed in range(10):
        draws = sample_sorted(UNIFORM, 10_000, SeededSampler(seed))
        if stats.kstest(draws, "uniform").statistic < 0.02:
            passed += 1
    assert passed >= 9


def test_block_generators_are_reproducible_and_distinct():
    s = SeededSampler(11, 2)
    assert np.array_equal(s.block_generator(0).random(4), s.block_generator(0).random(4))
    assert not np.array_equal(s.block_generator(0).random(4), s.block_generator(1).random(4))
    assert not np.array_equal(s.block_generator(0).random(4), s.stream(3).block_generator(0).random(4))


def test_seeded_sampler_rejects_negative_seed():
    with pytest.raises(ConfigurationError):
        SeededSampler(-1)
