"""Conditional-mean recursions and their constrained parameter spaces.

Two recursion forms are supported, both linear in the previous mean:

* linear (d = 3), theta = (alpha0, alpha, beta):
      x_t = alpha0 + alpha * y_{t-1} + beta * x_{t-1}
* threshold at a known level ``l`` (d = 4), theta = (alpha0, alpha1, alpha2, beta):
      x_t = alpha0 + alpha1 * max(y_{t-1} - l, 0)
                   + alpha2 * min(y_{t-1}, l) + beta * x_{t-1}

The parameter space is a box intersected with "sum <= 1 - eps" half-spaces
that enforce a mean-recursion contraction with Lipschitz coefficients
delta1 = beta (in x) and delta2 = alpha or max(alpha1, alpha2) (in y), so
delta1 + delta2 <= 1 - eps on the whole space.  For the Bernoulli family
the sum constraint includes alpha0, which also keeps every reachable mean
inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .families import Bernoulli, Family, NegBinomial, Poisson

DEFAULT_EPS = 0.01
DEFAULT_ALPHA0_BOUNDS = (1e-4, 20.0)


class InvalidParameter(ValueError):
    """Parameter vector outside the model's parameter space."""


class UnsupportedModel(ValueError):
    """Operation not defined for this recursion/family combination."""


@dataclass(frozen=True)
class ParamSpace:
    """Compact parameter space: a box plus sum-upper-bound half-spaces.

    ``sum_constraints`` lists index tuples; for each tuple the sum of those
    coordinates must not exceed ``1 - eps``.
    """

    lower: tuple
    upper: tuple
    sum_constraints: tuple = ()
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower/upper bound lengths differ")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for lo, hi in zip(self.lower, self.upper):
            if lo > hi:
                raise ValueError("empty box")

    @property
    def d(self):
        return len(self.lower)

    def violations(self, theta, names=None):
        """Names of every violated box bound and half-space (empty if valid).

        A float tolerance of 1e-9 absorbs rounding from projections.
        """
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.d,):
            return (f"expected {self.d} parameters, got shape {th.shape}",)
        names = names or tuple(f"theta[{i}]" for i in range(self.d))
        atol = 1e-9
        out = []
        for i in range(self.d):
            if th[i] < self.lower[i] - atol:
                out.append(f"{names[i]} = {th[i]:.6g} below lower bound {self.lower[i]:g}")
            if th[i] > self.upper[i] + atol:
                out.append(f"{names[i]} = {th[i]:.6g} above upper bound {self.upper[i]:g}")
        cap = 1.0 - self.eps
        for idx in self.sum_constraints:
            s = float(sum(th[i] for i in idx))
            if s > cap + atol:
                label = "+".join(names[i] for i in idx)
                out.append(f"{label} = {s:.6g} exceeds {cap:g}")
        return tuple(out)

    def contains(self, theta):
        return not self.violations(theta)

    def project(self, theta):
        """Deterministic, idempotent projection into the space.

        Clips to the box, then, if a sum constraint is violated, rescales
        the coordinates appearing in any sum constraint so the worst sum
        lands at ``1 - 1.5 * eps`` (strictly inside), and finally restores
        box lower bounds for the rescaled block.
        """
        th = np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)
        if not self.sum_constraints:
            return th
        cap = 1.0 - self.eps
        worst = max(float(sum(th[i] for i in idx)) for idx in self.sum_constraints)
        if worst > cap:
            block = sorted({i for idx in self.sum_constraints for i in idx})
            scale = (1.0 - 1.5 * self.eps) / worst
            for i in block:
                th[i] = max(th[i] * scale, self.lower[i])
        return th

    def centroid(self):
        mid = 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))
        return self.project(mid)


def _default_space(family, threshold, eps, alpha0_bounds):
    a0_lo, a0_hi = alpha0_bounds
    if isinstance(family, Bernoulli):
        if threshold is not None:
            raise UnsupportedModel("no threshold recursion for the Bernoulli family")
        # alpha0 + alpha + beta <= 1 - eps keeps means inside (0, 1)
        return ParamSpace(
            lower=(a0_lo, 0.0, 0.0),
            upper=(min(a0_hi, 1.0), 1.0, 1.0),
            sum_constraints=((0, 1, 2),),
            eps=eps,
        )
    if threshold is None:
        return ParamSpace(
            lower=(a0_lo, 0.0, 0.0),
            upper=(a0_hi, 1.0, 1.0),
            sum_constraints=((1, 2),),
            eps=eps,
        )
    # max(alpha1, alpha2) + beta <= 1 - eps, as two half-spaces
    return ParamSpace(
        lower=(a0_lo, 0.0, 0.0, 0.0),
        upper=(a0_hi, 1.0, 1.0, 1.0),
        sum_constraints=((1, 3), (2, 3)),
        eps=eps,
    )


@dataclass(frozen=True)
class ModelSpec:
    """A family plus a mean recursion and its parameter space."""

    family: Family
    threshold: int | None = None
    space: ParamSpace = field(default=None)

    def __post_init__(self):
        if self.threshold is not None:
            if isinstance(self.family, Bernoulli):
                raise UnsupportedModel("no threshold recursion for the Bernoulli family")
            if not (isinstance(self.threshold, (int, np.integer)) and self.threshold >= 0):
                raise ValueError("threshold level must be a nonnegative integer")
        if self.space is None:
            object.__setattr__(
                self, "space",
                _default_space(self.family, self.threshold, DEFAULT_EPS, DEFAULT_ALPHA0_BOUNDS),
            )
        d_expected = 3 if self.threshold is None else 4
        if self.space.d != d_expected:
            raise ValueError(
                f"parameter space has dimension {self.space.d}, expected {d_expected}"
            )

    @property
    def d(self):
        return 3 if self.threshold is None else 4

    @property
    def is_linear(self):
        return self.threshold is None

    @property
    def param_names(self):
        if self.is_linear:
            return ("alpha0", "alpha", "beta")
        return ("alpha0", "alpha1", "alpha2", "beta")

    @property
    def descriptor(self):
        fam = self.family
        if isinstance(fam, Poisson):
            base, opts = "poisson", []
        elif isinstance(fam, NegBinomial):
            base, opts = "nb", [f"r={fam.r}"]
        else:
            base, opts = "bernoulli", []
        kind = "ingarch" if self.is_linear else "intarch"
        if not self.is_linear:
            opts.append(f"l={self.threshold}")
        tail = ":" + ",".join(opts) if opts else ""
        return f"{base}-{kind}{tail}"

    # -- parameter validation ---------------------------------------------

    def validate(self, theta):
        """(is_valid, violation messages)."""
        v = self.space.violations(theta, self.param_names)
        return (not v, v)

    def require_valid(self, theta):
        ok, v = self.validate(theta)
        if not ok:
            raise InvalidParameter("; ".join(v))

    def project(self, theta):
        return self.space.project(theta)

    def contraction_coefficients(self, theta):
        """(delta1, delta2): Lipschitz coefficients in x and y."""
        th = np.asarray(theta, dtype=float)
        if self.is_linear:
            return float(th[2]), float(th[1])
        return float(th[3]), float(max(th[1], th[2]))

    # -- recursion ----------------------------------------------------------

    def mean_step(self, theta, x_prev, y_prev, validate=True):
        """One recursion step x_t = f_theta(x_{t-1}, y_{t-1})."""
        if validate:
            self.require_valid(theta)
        th = np.asarray(theta, dtype=float)
        if self.is_linear:
            return float(th[0] + th[1] * y_prev + th[2] * x_prev)
        l = self.threshold
        return float(
            th[0] + th[1] * max(y_prev - l, 0) + th[2] * min(y_prev, l) + th[3] * x_prev
        )

    def mean_step_grad(self, theta, x_prev, y_prev, dx_prev, validate=True):
        """Parameter gradient of the recursion step.

        d x_t / d theta = (d f / d theta)|_(x_prev, y_prev) + beta * dx_prev
        """
        if validate:
            self.require_valid(theta)
        th = np.asarray(theta, dtype=float)
        dx_prev = np.asarray(dx_prev, dtype=float)
        if self.is_linear:
            g = np.array([1.0, float(y_prev), float(x_prev)])
            return g + th[2] * dx_prev
        l = self.threshold
        g = np.array([1.0, float(max(y_prev - l, 0)), float(min(y_prev, l)), float(x_prev)])
        return g + th[3] * dx_prev

    def drive(self, theta, y_prev):
        """Vectorised f_theta(0, y_prev): the recursion term without beta*x."""
        th = np.asarray(theta, dtype=float)
        y = np.asarray(y_prev, dtype=float)
        if self.is_linear:
            return th[0] + th[1] * y
        l = self.threshold
        return th[0] + th[1] * np.maximum(y - l, 0.0) + th[2] * np.minimum(y, l)

    def grad_sources(self, y_prev, x_prev):
        """Per-step d f / d theta rows, shape (len(y_prev), d)."""
        y = np.asarray(y_prev, dtype=float)
        x = np.asarray(x_prev, dtype=float)
        if self.is_linear:
            return np.column_stack([np.ones_like(y), y, x])
        l = self.threshold
        return np.column_stack(
            [np.ones_like(y), np.maximum(y - l, 0.0), np.minimum(y, l), x]
        )

    def beta(self, theta):
        return float(np.asarray(theta, dtype=float)[-1])

    # -- moments ------------------------------------------------------------

    def stationary_mean(self, theta):
        """alpha0 / (1 - alpha - beta); linear recursion only."""
        if not self.is_linear:
            raise UnsupportedModel("no closed-form stationary mean for the threshold recursion")
        th = np.asarray(theta, dtype=float)
        if th[1] + th[2] >= 1.0:
            raise InvalidParameter("alpha + beta must be < 1 for a stationary mean")
        return float(th[0] / (1.0 - th[1] - th[2]))

    def sim_init_mean(self, theta):
        """Starting mean for simulation: the stationary mean when available."""
        th = np.asarray(theta, dtype=float)
        if self.is_linear:
            return self.stationary_mean(th)
        return float(th[0] / (1.0 - th[3]))


# -- model descriptor strings ---------------------------------------------

_KNOWN = {
    "poisson-ingarch": (Poisson, False),
    "nb-ingarch": (NegBinomial, False),
    "bernoulli-ingarch": (Bernoulli, False),
    "poisson-intarch": (Poisson, True),
    "nb-intarch": (NegBinomial, True),
}


def linear_model(family, *, eps=DEFAULT_EPS, alpha0_bounds=DEFAULT_ALPHA0_BOUNDS, space=None):
    space = space or _default_space(family, None, eps, alpha0_bounds)
    return ModelSpec(family, None, space)


def threshold_model(family, level, *, eps=DEFAULT_EPS, alpha0_bounds=DEFAULT_ALPHA0_BOUNDS, space=None):
    space = space or _default_space(family, level, eps, alpha0_bounds)
    return ModelSpec(family, int(level), space)


def parse_model(text):
    """Build a ModelSpec from a descriptor like ``nb-ingarch:r=8``.

    Known forms: poisson-ingarch, nb-ingarch:r=R, bernoulli-ingarch,
    poisson-intarch:l=L, nb-intarch:r=R,l=L.
    """
    name, _, opt_text = text.strip().partition(":")
    if name not in _KNOWN:
        raise ValueError(f"unknown model {name!r}; known: {', '.join(sorted(_KNOWN))}")
    fam_cls, has_threshold = _KNOWN[name]
    opts = {}
    if opt_text:
        for item in opt_text.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ValueError(f"bad model option {item!r} in {text!r}")
            opts[key.strip()] = val.strip()
    level = None
    if has_threshold:
        if "l" not in opts:
            raise ValueError(f"{name} requires a threshold level, e.g. {name}:l=5")
        level = int(opts.pop("l"))
    if fam_cls is NegBinomial:
        if "r" not in opts:
            raise ValueError(f"{name} requires the failure count r, e.g. {name}:r=8")
        family = NegBinomial(int(opts.pop("r")))
    else:
        family = fam_cls()
    if opts:
        raise ValueError(f"unknown model options {sorted(opts)} in {text!r}")
    if has_threshold:
        return threshold_model(family, level)
    return linear_model(family)
