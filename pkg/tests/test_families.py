import math

import numpy as np
import pytest

from countcpt.families import (
    Bernoulli,
    InvalidMean,
    InvalidNaturalParameter,
    NegBinomial,
    Poisson,
)

ALL = [Poisson(), NegBinomial(1), NegBinomial(8), Bernoulli()]


def grid(fam, n=1000):
    lo, hi = fam.mean_domain
    if np.isinf(hi):
        return np.linspace(1e-4, 50.0, n)
    return np.linspace(1e-4, hi - 1e-4, n)


def test_cumulant_values():
    assert Poisson().cumulant(0.0) == pytest.approx(1.0)
    assert Bernoulli().cumulant(0.0) == pytest.approx(math.log(2.0))
    # r * log(r / (1 - e^eta)) at r=1, e^eta = 1/2 reduces to log 2
    assert NegBinomial(1).cumulant(-math.log(2.0)) == pytest.approx(math.log(2.0))


def test_link_values():
    assert Poisson().natural_from_mean(1.0) == pytest.approx(0.0)
    assert Bernoulli().natural_from_mean(0.5) == pytest.approx(0.0)
    assert NegBinomial(1).natural_from_mean(1.0) == pytest.approx(-math.log(2.0))


def test_link_inversion_on_grid():
    for fam in ALL:
        x = grid(fam)
        back = fam.mean_from_natural(fam.natural_from_mean(x))
        assert np.max(np.abs(back - x) / x) <= 1e-12


def test_variance_values():
    assert Poisson().variance_from_mean(3.0) == pytest.approx(3.0)
    assert Bernoulli().variance_from_mean(0.5) == pytest.approx(0.25)
    # x (x + r) / r at r=8, x=8
    assert NegBinomial(8).variance_from_mean(8.0) == pytest.approx(16.0)


def test_variance_matches_mean_derivative():
    # A'' = d A' / d eta, checked by central differences at eta(x)
    h = 1e-6
    for fam in ALL:
        x = grid(fam, 200)
        eta = fam.natural_from_mean(x)
        fd = (fam.mean_from_natural(eta + h) - fam.mean_from_natural(eta - h)) / (2 * h)
        v = fam.variance_from_mean(x)
        assert np.max(np.abs(fd - v) / v) <= 1e-6


def test_cumulant_strictly_convex():
    for fam in ALL:
        eta = fam.natural_from_mean(grid(fam, 300))
        v = fam.variance_from_mean(fam.mean_from_natural(eta))
        assert np.all(v > 0)


def test_domain_errors():
    with pytest.raises(InvalidNaturalParameter):
        NegBinomial(2).cumulant(0.0)
    with pytest.raises(InvalidNaturalParameter):
        NegBinomial(2).mean_from_natural(0.5)
    with pytest.raises(InvalidMean):
        Poisson().natural_from_mean(0.0)
    with pytest.raises(InvalidMean):
        Bernoulli().natural_from_mean(1.0)
    with pytest.raises(InvalidMean):
        Bernoulli().sample(1.5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        NegBinomial(0)


def test_sampler_poisson_mean():
    rng = np.random.default_rng(11)
    draws = Poisson().sample(np.full(100_000, 4.0), rng)
    band = 3.0 * math.sqrt(4.0 / 100_000)
    assert abs(draws.mean() - 4.0) <= band


def test_sampler_nb_variance():
    rng = np.random.default_rng(12)
    draws = NegBinomial(1).sample(np.full(100_000, 1.0), rng)
    # Var = x (x + r) / r = 2
    assert abs(draws.var() - 2.0) <= 0.15
    assert abs(draws.mean() - 1.0) <= 3.0 * math.sqrt(2.0 / 100_000)


def test_sampler_bernoulli_near_degenerate():
    rng = np.random.default_rng(13)
    draws = Bernoulli().sample(np.full(10_000, 1.0 - 1e-15), rng)
    assert np.all(draws == 1)


def test_sampler_moments_all_families():
    # mean and variance of 1e5 draws within 4 sigma Monte Carlo bands
    rng = np.random.default_rng(14)
    cases = [(Poisson(), 2.5), (NegBinomial(1), 0.7), (NegBinomial(8), 8.0),
             (Bernoulli(), 0.3)]
    n = 100_000
    for fam, x in cases:
        draws = fam.sample(np.full(n, x), rng)
        v = fam.variance_from_mean(x)
        assert abs(draws.mean() - x) <= 4.0 * math.sqrt(v / n)
        # fourth-moment bound for the variance band, generous kurtosis guess
        mu4 = np.mean((draws - draws.mean()) ** 4)
        se_var = math.sqrt(max(mu4 - v * v, 1e-12) / n)
        assert abs(draws.var() - v) <= 4.0 * se_var


def test_sample_scalar_is_int():
    rng = np.random.default_rng(15)
    assert isinstance(Poisson().sample(3.0, rng), int)
    assert isinstance(NegBinomial(2).sample(1.0, rng), int)
    assert Bernoulli().sample(0.5, rng) in (0, 1)


def test_clamp_mean_counts():
    fam = Bernoulli()
    clamped, count = fam.clamp_mean(np.array([0.5, -0.1, 1.2]))
    assert count == 2
    assert clamped[0] == 0.5
    assert 0.0 < clamped[1] < clamped[2] < 1.0


def test_support_checks():
    assert Poisson().in_support(np.array([0, 3, 7]))
    assert not Poisson().in_support(np.array([-1, 2]))
    assert not Poisson().in_support(np.array([1.5]))
    assert Bernoulli().in_support(np.array([0, 1, 1]))
    assert not Bernoulli().in_support(np.array([0, 2]))
