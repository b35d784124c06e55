import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from translot.demand import (TAGS_4, TAGS_10, DemandSpec, DiscreteDist, Normal, convolve,
                             cumulative, discretize, make_pattern, merge_pattern_config)
from translot.errors import ConfigurationError, DomainError


def test_discrete_dist_renormalizes_and_is_read_only():
    d = DiscreteDist(2, np.array([1.0, 3.0]))
    assert d.pmf.tolist() == [0.25, 0.75]
    assert d.support.tolist() == [2, 3]
    with pytest.raises(ValueError):
        d.pmf[0] = 1.0


@pytest.mark.parametrize("pmf", [[], [-0.1, 1.1], [0.0, 0.0]])
def test_discrete_dist_rejects_bad_pmf(pmf):
    with pytest.raises(DomainError):
        DiscreteDist(0, np.array(pmf, dtype=float))


def test_from_dict_mean_var_cdf():
    d = DiscreteDist.from_dict({1: 0.5, 3: 0.5})
    assert d.mean() == 2.0
    assert d.var() == 1.0
    assert d.cdf([0, 1, 2, 3, 9]).tolist() == [0.0, 0.5, 0.5, 1.0, 1.0]


def test_poisson_truncation_keeps_one_minus_eps():
    spec = DemandSpec("poisson", (7.0,))
    for eps in (1e-3, 1e-5, 1e-8):
        d = discretize(spec, 1, eps)
        q = d.support_max
        assert stats.poisson.cdf(q, 7.0) >= 1 - eps
        assert stats.poisson.cdf(q - 1, 7.0) < 1 - eps
        assert d.retained_mass == pytest.approx(stats.poisson.cdf(q, 7.0))
        np.testing.assert_allclose(d.pmf, stats.poisson.pmf(d.support, 7.0) / d.retained_mass)


def test_normal_discretization_matches_cdf_differences():
    spec = DemandSpec("normal", (20.0,), cv=0.1)
    d = discretize(spec, 1)
    lo, hi = d.support_min, d.support_max
    ref = stats.norm(20, 2)
    expect = ref.cdf(np.arange(lo, hi + 1) + 0.5) - ref.cdf(np.arange(lo, hi + 1) - 0.5)
    np.testing.assert_allclose(d.pmf, expect / expect.sum(), rtol=1e-12)
    assert ref.cdf(lo - 0.5) <= 1e-5 and ref.sf(hi + 0.5) <= 1e-5
    assert d.mean() == pytest.approx(20.0, abs=1e-6)


def test_normal_negative_mass_folds_onto_zero():
    spec = DemandSpec("normal", (1.0,), cv=1.0)
    d = discretize(spec, 1)
    assert d.support_min == 0
    assert d.pmf[0] * d.retained_mass == pytest.approx(stats.norm(1, 1).cdf(0.5))


def test_deterministic_and_empirical():
    det = DemandSpec("deterministic", (3, 0))
    assert discretize(det, 1) == DiscreteDist.point_mass(3)
    assert discretize(det, 2) == DiscreteDist.point_mass(0)
    emp = DemandSpec("empirical", (), pmfs=((1, (0.5, 0.0, 0.5)),))
    assert emp.means == (2.0,)
    assert discretize(emp, 1).support.tolist() == [1, 2, 3]


@pytest.mark.parametrize("kwargs", [
    dict(family="gamma", means=(1.0,)),
    dict(family="poisson", means=()),
])
def test_spec_configuration_errors(kwargs):
    with pytest.raises(ConfigurationError):
        DemandSpec(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(family="poisson", means=(0.0,)),
    dict(family="normal", means=(5.0,), cv=0.0),
    dict(family="deterministic", means=(1.5,)),
    dict(family="poisson", means=(math.inf,)),
])
def test_spec_domain_errors(kwargs):
    with pytest.raises(DomainError):
        DemandSpec(**kwargs)


def test_discretize_argument_checks():
    spec = DemandSpec("poisson", (2.0, 3.0))
    with pytest.raises(DomainError):
        discretize(spec, 3)
    with pytest.raises(DomainError):
        discretize(spec, 1, 0.0)


def test_convolution_of_two_dice():
    die = DiscreteDist(1, np.ones(6))
    two = convolve(die, die)
    assert two.support_min == 2 and two.support_max == 12
    assert two.pmf[5] == pytest.approx(6 / 36)
    three = cumulative([die, die, die])
    assert three.mean() == pytest.approx(10.5)
    assert three.var() == pytest.approx(3 * 35 / 12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.2, 6.0), min_size=1, max_size=4))
def test_cumulative_poisson_moments(means):
    spec = DemandSpec("poisson", tuple(means))
    tot = cumulative([discretize(spec, t + 1, 1e-10) for t in range(len(means))])
    assert tot.mean() == pytest.approx(sum(means), rel=1e-7)
    assert tot.var() == pytest.approx(sum(means), rel=1e-6)


def test_normal_addition():
    s = Normal(3.0, 3.0) + Normal(4.0, 4.0)
    assert (s.mu, s.sigma) == (7.0, 5.0)


def test_sampling_is_reproducible_and_within_support():
    d = discretize(DemandSpec("poisson", (4.0,)), 1)
    a = d.sample(np.random.default_rng(5), 2000)
    b = d.sample(np.random.default_rng(5), 2000)
    assert np.array_equal(a, b)
    assert a.min() >= d.support_min and a.max() <= d.support_max
    assert abs(a.mean() - 4.0) < 0.2


def test_normal_spec_samples_continuous_values():
    spec = DemandSpec("normal", (10.0,), cv=0.1)
    x = spec.sample(1, np.random.default_rng(0), 5000)
    assert x.dtype.kind == "f"
    assert abs(x.std() - 1.0) < 0.05


@pytest.mark.parametrize("tag", TAGS_4)
def test_four_period_patterns_positive(tag):
    m = make_pattern(tag, 4, 10.0)
    assert len(m) == 4 and min(m) > 0


@pytest.mark.parametrize("tag", TAGS_10)
@pytest.mark.parametrize("T", [2, 7, 10])
def test_ten_period_patterns_truncate(tag, T):
    full = make_pattern(tag, 10, 10.0)
    if tag in ("STAT", "RAND", "EMP"):
        assert make_pattern(tag, T, 10.0) == pytest.approx(full[:T])
    assert len(make_pattern(tag, T, 10.0)) == T


def test_pattern_shapes():
    assert make_pattern("STAT", 4, 7.0) == [7.0] * 4
    sin = make_pattern("SIN1", 4, 10.0)
    assert sin == pytest.approx([15.0, 10.0, 5.0, 10.0])
    lcy = make_pattern("LCY", 10, 10.0)
    assert all(b >= a for a, b in zip(lcy, lcy[1:]))


def test_pattern_errors():
    with pytest.raises(ConfigurationError):
        make_pattern("NOPE", 4, 1.0)
    with pytest.raises(ConfigurationError):
        make_pattern("SIN1", 5, 1.0)
    with pytest.raises(ConfigurationError):
        make_pattern("STAT", 4, 0.0)


def test_pattern_overrides():
    cfg = merge_pattern_config({"tables": {"EMP1": [1, 2, 3, 4]}, "sin_strong": 0.1})
    assert make_pattern("EMP1", 4, 2.0, cfg) == [2.0, 4.0, 6.0, 8.0]
    assert make_pattern("SIN1", 4, 10.0, cfg)[0] == pytest.approx(11.0)
    assert merge_pattern_config(None)["tables"]["EMP1"] != [1, 2, 3, 4]
