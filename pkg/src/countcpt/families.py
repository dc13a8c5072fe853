"""One-parameter exponential families for integer-valued observations.

Each family is determined by its cumulant function ``A``: the probability
of observing ``y`` given the natural parameter ``eta`` is

    p(y | eta) = exp(eta * y - A(eta)) * h(y)

so the conditional mean is ``A'(eta)`` and the conditional variance is
``A''(eta)``.  Three families are implemented: Poisson, negative binomial
with a fixed number of failures ``r``, and Bernoulli.

``h(y)`` is constant in the model parameter and cancels from every
likelihood difference, so it is never evaluated here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# Means are clamped into the (open) mean domain by this margin before any
# link evaluation; callers count how often the clamp fires.
MEAN_GUARD = 1e-10


class InvalidNaturalParameter(ValueError):
    """Natural parameter outside the family's natural domain."""


class InvalidMean(ValueError):
    """Conditional mean outside the family's mean domain."""


def _prepare(x):
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def _ret(a, scalar):
    return float(a) if scalar else a


class Family:
    """Base class; subclasses fix A, its derivatives and a sampler.

    All methods accept scalars or arrays and are pure; ``sample`` mutates
    only the caller-supplied generator.
    """

    name = ""
    mean_domain = (0.0, np.inf)  # open interval of admissible means

    # -- cumulant function and links ------------------------------------

    def cumulant(self, eta):
        """A(eta); strictly convex on the natural domain."""
        raise NotImplementedError

    def mean_from_natural(self, eta):
        """A'(eta), the conditional mean."""
        raise NotImplementedError

    def natural_from_mean(self, x):
        """(A')^{-1}(x) for x in the mean domain."""
        raise NotImplementedError

    def variance_from_mean(self, x):
        """A''((A')^{-1}(x)), the conditional variance at mean x."""
        raise NotImplementedError

    def sample(self, x, rng):
        """One exact draw (or an array of draws) with conditional mean x."""
        raise NotImplementedError

    # -- shared helpers ---------------------------------------------------

    def check_mean(self, x):
        a, _ = _prepare(x)
        lo, hi = self.mean_domain
        if np.any(a <= lo) or np.any(a >= hi):
            raise InvalidMean(
                f"{self.name}: mean must lie in the open interval ({lo}, {hi})"
            )

    def clamp_mean(self, x):
        """Clamp means into the guarded mean domain.

        Returns ``(clamped, count)`` where ``count`` is the number of
        entries that were moved.  Clamping is never silent: callers must
        account for the count.
        """
        a, scalar = _prepare(x)
        lo, hi = self.mean_domain
        lo = lo + MEAN_GUARD
        hi = hi if np.isinf(hi) else hi - MEAN_GUARD
        clamped = np.clip(a, lo, hi)
        count = int(np.count_nonzero(clamped != a))
        return _ret(clamped, scalar), count

    def in_support(self, y):
        a = np.asarray(y)
        ok = (a >= 0) & (a == np.floor(a))
        return bool(np.all(ok)) if a.ndim else bool(ok)

    def mean_bounds_for_counts(self):
        return self.mean_domain


@dataclass(frozen=True)
class Poisson(Family):
    """Poisson family: A(eta) = exp(eta), natural domain all of R."""

    name = "poisson"
    mean_domain = (0.0, np.inf)

    def cumulant(self, eta):
        a, scalar = _prepare(eta)
        return _ret(np.exp(a), scalar)

    def mean_from_natural(self, eta):
        a, scalar = _prepare(eta)
        return _ret(np.exp(a), scalar)

    def natural_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(np.log(a), scalar)

    def variance_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(a.copy() if not scalar else a, scalar)

    def sample(self, x, rng):
        if isinstance(x, (int, float)):
            if not self.mean_domain[0] < x:
                raise InvalidMean(f"poisson: mean {x} not positive")
            return int(rng.poisson(x))
        self.check_mean(x)
        return rng.poisson(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class NegBinomial(Family):
    """Negative binomial with a fixed integer number of failures ``r``.

    Parameterised so that the success probability is p = r / (r + x) for
    conditional mean x; the natural parameter is eta = log(x / (x + r)) < 0
    and A(eta) = r * log(r / (1 - exp(eta))).
    """

    r: int

    name = "nb"
    mean_domain = (0.0, np.inf)

    def __post_init__(self):
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 1):
            raise ValueError(f"nb: r must be a positive integer, got {self.r!r}")

    def cumulant(self, eta):
        a, scalar = _prepare(eta)
        if np.any(a >= 0):
            raise InvalidNaturalParameter("nb: natural parameter must be < 0")
        # r * (log r - log(1 - e^eta)); -expm1 keeps precision near eta = 0-
        val = self.r * (np.log(self.r) - np.log(-np.expm1(a)))
        return _ret(val, scalar)

    def mean_from_natural(self, eta):
        a, scalar = _prepare(eta)
        if np.any(a >= 0):
            raise InvalidNaturalParameter("nb: natural parameter must be < 0")
        return _ret(self.r / np.expm1(-a), scalar)

    def natural_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(np.log(a) - np.log(a + self.r), scalar)

    def variance_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(a * (a + self.r) / self.r, scalar)

    def sample(self, x, rng):
        # Exact Poisson-Gamma mixture: lam ~ Gamma(shape=r, scale=x/r),
        # Y | lam ~ Poisson(lam) gives NB(r, r/(r+x)) with mean x.
        if isinstance(x, (int, float)):
            if not x > 0:
                raise InvalidMean(f"nb: mean {x} not positive")
            return int(rng.poisson(rng.gamma(self.r, x / self.r)))
        self.check_mean(x)
        a = np.asarray(x, dtype=float)
        return rng.poisson(rng.gamma(self.r, a / self.r))


@dataclass(frozen=True)
class Bernoulli(Family):
    """Bernoulli family: A(eta) = log(1 + exp(eta)), support {0, 1}."""

    name = "bernoulli"
    mean_domain = (0.0, 1.0)

    def cumulant(self, eta):
        a, scalar = _prepare(eta)
        return _ret(np.logaddexp(0.0, a), scalar)

    def mean_from_natural(self, eta):
        a, scalar = _prepare(eta)
        return _ret(expit(a), scalar)

    def natural_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(np.log(a) - np.log1p(-a), scalar)

    def variance_from_mean(self, x):
        self.check_mean(x)
        a, scalar = _prepare(x)
        return _ret(a * (1.0 - a), scalar)

    def sample(self, x, rng):
        if isinstance(x, (int, float)):
            if not 0.0 < x < 1.0:
                raise InvalidMean(f"bernoulli: mean {x} not in (0, 1)")
            return int(rng.random() < x)
        self.check_mean(x)
        a = np.asarray(x, dtype=float)
        return (rng.random(a.shape) < a).astype(np.int64)

    def in_support(self, y):
        a = np.asarray(y)
        ok = (a == 0) | (a == 1)
        return bool(np.all(ok)) if a.ndim else bool(ok)
