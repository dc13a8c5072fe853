"""Conditional log-likelihood, score and information for observation segments.

For a segment {k, ..., k'} the mean recursion is started at a
parameter-free value ``x_init`` (so the derivative state starts at zero)
and filtered forward:

    x_t = f_theta(x_{t-1}, y_{t-1}),    eta_t = (A')^{-1}(x_t)

The per-observation log-likelihood is ``l_t = eta_t * y_t - A(eta_t)`` (the
base measure drops out), the score is ``sum (y_t - x_t) * d eta_t / d theta``
with ``d eta_t / d theta = (d x_t / d theta) / A''(eta_t)``, and the
information estimate is the normalised Gram matrix

    omega = (1/m) * sum A''(eta_t) (d eta_t)(d eta_t)^T.

Because every supported recursion is linear in the latent mean with
coefficient beta, the recursion and all its parameter derivatives are
evaluated with ``scipy.signal.lfilter``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .families import Bernoulli

# evaluations with more than this fraction of clamped means are rejected
GUARD_FRACTION = 0.01


class NumericDegeneracy(RuntimeError):
    """Too many filtered means hit the mean-domain guard."""


class SegmentError(ValueError):
    """Bad segment bounds or initial mean."""


@dataclass(frozen=True)
class Segment:
    """Inclusive 1-based observation range [k, kp] of a series ``y``.

    ``x_init`` is the initial conditional mean; when None it defaults to
    the empirical mean of the segment's observations (clamped into the
    open unit interval for the Bernoulli family).
    """

    y: np.ndarray
    k: int
    kp: int
    x_init: float | None = None

    def __post_init__(self):
        n = len(self.y)
        if not 1 <= self.k <= self.kp <= n:
            raise SegmentError(f"need 1 <= k <= kp <= {n}, got k={self.k}, kp={self.kp}")

    @property
    def length(self):
        return self.kp - self.k + 1

    @property
    def values(self):
        return np.asarray(self.y)[self.k - 1:self.kp]


def full_segment(y, x_init=None):
    return Segment(np.asarray(y), 1, len(y), x_init)


def resolve_x_init(model, segment):
    """Initial mean actually used for a segment (before guard clamping)."""
    if segment.x_init is not None:
        return float(segment.x_init)
    m = float(np.mean(segment.values))
    if isinstance(model.family, Bernoulli):
        eps = model.space.eps
        m = min(max(m, eps), 1.0 - eps)
    return m


@dataclass
class FilterState:
    """Filtered means, natural parameters and their theta-derivatives."""

    x: np.ndarray          # clamped means, length m
    eta: np.ndarray        # natural parameters
    var: np.ndarray        # conditional variances A''(eta)
    dx: np.ndarray         # (m, d) mean derivatives
    deta: np.ndarray       # (m, d) natural-parameter derivatives
    d2x: np.ndarray | None  # (m, d, d) second derivatives, on request
    clamped: int
    x_init: float


def _recurse(beta, source, init):
    """x_t = source_t + beta * x_{t-1}, seeded so the first output sees ``init``."""
    out, _ = lfilter([1.0], [1.0, -beta], source, zi=[beta * init])
    return out


def filter_segment(model, theta, segment, *, second_order=False, validate=True):
    """Run the mean/derivative filter over a segment.

    Raises NumericDegeneracy when more than GUARD_FRACTION of the filtered
    means had to be clamped into the family's mean domain.
    """
    if validate:
        model.require_valid(theta)
    th = np.asarray(theta, dtype=float)
    fam = model.family
    d = model.d
    yseg = segment.values.astype(float)
    m = segment.length

    x0 = resolve_x_init(model, segment)
    x0c, n_init_clamped = fam.clamp_mean(x0)

    beta = model.beta(th)
    x = np.empty(m)
    x[0] = x0c
    if m > 1:
        yprev = yseg[:-1]
        x[1:] = _recurse(beta, model.drive(th, yprev), x0c)

    xc, n_clamped = fam.clamp_mean(x)
    clamped = n_clamped + n_init_clamped
    if clamped > GUARD_FRACTION * m:
        raise NumericDegeneracy(
            f"{clamped} of {m} filtered means outside the mean domain"
        )

    dx = np.zeros((m, d))
    if m > 1:
        src = model.grad_sources(yprev, x[:-1])
        for j in range(d):
            dx[1:, j] = _recurse(beta, src[:, j], 0.0)

    eta = fam.natural_from_mean(xc)
    var = fam.variance_from_mean(xc)
    deta = dx / var[:, None]

    d2x = None
    if second_order:
        # d2x_t = S_t + beta * d2x_{t-1} with S_t = e_b dx_{t-1}^T + dx_{t-1} e_b^T,
        # b the beta coordinate (only the beta row of df/dtheta depends on x).
        d2x = np.zeros((m, d, d))
        if m > 1:
            b = d - 1
            prev = dx[:-1]
            for i in range(d):
                for j in range(i, d):
                    s = np.zeros(m - 1)
                    if i == b:
                        s = s + prev[:, j]
                    if j == b:
                        s = s + prev[:, i]
                    if i == b or j == b:
                        d2x[1:, i, j] = _recurse(beta, s, 0.0)
                        d2x[:, j, i] = d2x[:, i, j]

    return FilterState(x=xc, eta=eta, var=var, dx=dx, deta=deta, d2x=d2x,
                       clamped=clamped, x_init=x0)


def loglik(model, theta, segment):
    """Conditional log-likelihood of the segment (base measure omitted)."""
    st = filter_segment(model, theta, segment)
    yseg = segment.values.astype(float)
    return float(yseg @ st.eta - np.sum(model.family.cumulant(st.eta)))


def score(model, theta, segment):
    """Gradient of the segment log-likelihood."""
    st = filter_segment(model, theta, segment)
    yseg = segment.values.astype(float)
    return (yseg - st.x) @ st.deta


def score_terms(model, theta, segment):
    """Per-observation score contributions, shape (m, d)."""
    st = filter_segment(model, theta, segment)
    yseg = segment.values.astype(float)
    return (yseg - st.x)[:, None] * st.deta


def omega_hat(model, theta, segment):
    """Segment-length-normalised information matrix estimate (PSD)."""
    st = filter_segment(model, theta, segment)
    w = st.dx / np.sqrt(st.var)[:, None]
    return (w.T @ w) / segment.length


def loglik_score_info(model, theta, segment, *, validate=True):
    """(loglik, score, omega) from a single filter pass."""
    st = filter_segment(model, theta, segment, validate=validate)
    yseg = segment.values.astype(float)
    ll = float(yseg @ st.eta - np.sum(model.family.cumulant(st.eta)))
    sc = (yseg - st.x) @ st.deta
    w = st.dx / np.sqrt(st.var)[:, None]
    om = (w.T @ w) / segment.length
    return ll, sc, om


def _hessian_from_state(model, st, yseg):
    resid = yseg - st.x
    # d2 eta = d2x / V - V'(x) (dx)(dx)^T / V^2
    vprime = _variance_slope(model.family, st.x)
    outer = st.dx[:, :, None] * st.dx[:, None, :]
    d2eta = st.d2x / st.var[:, None, None] - (vprime / st.var**2)[:, None, None] * outer
    info = np.einsum("t,ti,tj->ij", st.var, st.deta, st.deta)
    h = -info + np.einsum("t,tij->ij", resid, d2eta)
    return 0.5 * (h + h.T)


def loglik_hessian(model, theta, segment):
    """Analytic Hessian of the segment log-likelihood.

    Uses the decomposition into the negative information term and the
    residual-weighted second derivative of eta.
    """
    st = filter_segment(model, theta, segment, second_order=True)
    return _hessian_from_state(model, st, segment.values.astype(float))


def loglik_score_hess_info(model, theta, segment, *, validate=True):
    """(loglik, score, hessian, omega) from a single second-order pass."""
    st = filter_segment(model, theta, segment, second_order=True, validate=validate)
    yseg = segment.values.astype(float)
    ll = float(yseg @ st.eta - np.sum(model.family.cumulant(st.eta)))
    sc = (yseg - st.x) @ st.deta
    w = st.dx / np.sqrt(st.var)[:, None]
    om = (w.T @ w) / segment.length
    return ll, sc, _hessian_from_state(model, st, yseg), om


def _variance_slope(fam, x):
    """d/dx of the variance function V(x)."""
    from .families import NegBinomial, Poisson

    if isinstance(fam, Poisson):
        return np.ones_like(x)
    if isinstance(fam, NegBinomial):
        return (2.0 * x + fam.r) / fam.r
    return 1.0 - 2.0 * x  # Bernoulli


def omega_split(model, y, u_n, theta_left, theta_right, *,
                x_init_left=None, x_init_right=None):
    """Average of the two split-sample information estimates.

    The left estimate runs over observations 1..u_n at ``theta_left``, the
    right over u_n+1..n at ``theta_right``; each is evaluated at its own
    segment maximiser by the caller.  The result stays informative under a
    parameter change, unlike the full-sample estimate.
    """
    y = np.asarray(y)
    n = len(y)
    d = model.d
    if not (d + 1 <= u_n <= n - d - 1):
        raise SegmentError(f"need {d + 1} <= u_n <= {n - d - 1}, got {u_n}")
    left = Segment(y, 1, u_n, x_init_left)
    right = Segment(y, u_n + 1, n, x_init_right)
    om = 0.5 * (omega_hat(model, theta_left, left) + omega_hat(model, theta_right, right))
    return 0.5 * (om + om.T)


# -- fused evaluation kernel --------------------------------------------------
#
# The optimizer evaluates (loglik, score, hessian, omega) thousands of times
# per test sweep; a single jitted pass over the segment replaces a dozen
# vectorised numpy calls.  The lfilter-based filter_segment above remains the
# reference implementation and the two are tested against each other.

from numba import njit  # noqa: E402


@njit(cache=True)
def _eval_pass(kind, r, level, theta, yseg, x0, m_guard):
    """One forward pass: returns (ll, score, hess, omega_sum, clamped).

    kind: 0 Poisson, 1 negative binomial (r failures), 2 Bernoulli.
    level < 0 selects the linear recursion.  omega_sum is unnormalised.
    """
    m = yseg.shape[0]
    d = theta.shape[0]
    beta = theta[d - 1]
    lo = 1e-10
    hi = 1.0 - 1e-10  # only binds for the Bernoulli family

    ll = 0.0
    clamped = 0
    score = np.zeros(d)
    omega = np.zeros((d, d))
    hess = np.zeros((d, d))
    dx = np.zeros(d)
    dxp = np.zeros(d)
    h2 = np.zeros(d)  # second derivatives d2X / (dtheta_j dbeta)
    x = x0

    for t in range(m):
        if t > 0:
            yprev = yseg[t - 1]
            for j in range(d):
                dxp[j] = dx[j]
            # d2X recursion uses the previous first derivatives
            for j in range(d):
                extra = dxp[j]
                if j == d - 1:
                    extra += dxp[d - 1]
                h2[j] = beta * h2[j] + extra
            if level < 0:
                u = theta[0] + theta[1] * yprev
                dx[0] = 1.0 + beta * dxp[0]
                dx[1] = yprev + beta * dxp[1]
                dx[2] = x + beta * dxp[2]
            else:
                above = yprev - level
                if above < 0.0:
                    above = 0.0
                below = yprev if yprev < level else level
                u = theta[0] + theta[1] * above + theta[2] * below
                dx[0] = 1.0 + beta * dxp[0]
                dx[1] = above + beta * dxp[1]
                dx[2] = below + beta * dxp[2]
                dx[3] = x + beta * dxp[3]
            x = u + beta * x

        xc = x
        if xc < lo:
            xc = lo
            clamped += 1
        elif kind == 2 and xc > hi:
            xc = hi
            clamped += 1
        if clamped > m_guard:
            return ll, score, hess, omega, clamped

        yt = yseg[t]
        if kind == 0:
            eta = np.log(xc)
            big_a = xc
            var = xc
            vprime = 1.0
        elif kind == 1:
            eta = np.log(xc / (xc + r))
            big_a = r * np.log(xc + r)  # r log(r / (1 - e^eta)) at the mean
            var = xc * (xc + r) / r
            vprime = (2.0 * xc + r) / r
        else:
            eta = np.log(xc / (1.0 - xc))
            big_a = -np.log(1.0 - xc)
            var = xc * (1.0 - xc)
            vprime = 1.0 - 2.0 * xc

        ll += eta * yt - big_a
        resid = yt - xc
        w_score = resid / var
        w_hess = resid * vprime / (var * var)
        for i in range(d):
            di = dx[i]
            score[i] += w_score * di
            for j in range(i, d):
                dj = dx[j]
                omega[i, j] += di * dj / var
                # -(dx dx^T)/V + resid * (d2x / V - V' dx dx^T / V^2)
                hval = -di * dj / var - w_hess * di * dj
                if i == d - 1:
                    hval += w_score * h2[j]
                elif j == d - 1:
                    hval += w_score * h2[i]
                hess[i, j] += hval

    for i in range(d):
        for j in range(i):
            omega[i, j] = omega[j, i]
            hess[i, j] = hess[j, i]
    return ll, score, hess, omega, clamped


_FAMILY_CODE = {"poisson": 0, "nb": 1, "bernoulli": 2}


def _kernel_eval(model, theta, segment, validate=True):
    if validate:
        model.require_valid(theta)
    th = np.asarray(theta, dtype=float)
    fam = model.family
    yseg = segment.values.astype(float)
    m = segment.length
    x0 = resolve_x_init(model, segment)
    x0c, pre = fam.clamp_mean(x0)
    guard = GUARD_FRACTION * m
    ll, score, hess, omega, clamped = _eval_pass(
        _FAMILY_CODE[fam.name],
        float(getattr(fam, "r", 1)),
        float(model.threshold) if model.threshold is not None else -1.0,
        th, yseg, x0c, guard - pre,
    )
    if clamped + pre > guard:
        raise NumericDegeneracy(
            f"{clamped + pre} of {m} filtered means outside the mean domain"
        )
    return ll, score, hess, omega / m
