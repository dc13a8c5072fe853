"""The parameter-change test: weighted statistic, sweep, decision, breakpoint.

For a split at k, both sides of the series are fitted by constrained
maximum likelihood and compared through the quadratic form

    C_{n,k} = (1 / q(k/n)^2) * k^2 (n-k)^2 / n^3
              * (theta_left - theta_right)^T  Omega  (theta_left - theta_right)

where Omega is the split-sample information estimate computed once from
the first u_n and last n - u_n observations.  The test statistic is the
maximum of C_{n,k} over k in [v_n, n - v_n]; under a constant parameter it
converges to the supremum of a squared weighted d-dimensional Brownian
bridge, so critical values come from the ``critval`` module.  The argmax
is the breakpoint estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import NumericDegeneracy, Segment, omega_hat, omega_split
from .mle import FitError, FitResult, SegmentTooShort, fit, min_segment_length


class SeriesTooShort(ValueError):
    pass


class DegenerateCurve(RuntimeError):
    """No split produced a pair of valid segment fits."""


# fraction of invalid curve points above which the report carries a warning
INVALID_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class Weight:
    """Weight function on (0, 1): constant one, or (tau (1-tau))^gamma.

    Powers with gamma in [0, 1/2) are admissible: they are positive on
    compact subintervals, monotone near the endpoints, and the tail
    integral I(q, c) is finite for every c > 0.  gamma >= 1/2 makes the
    tail integral diverge, which breaks the null limit.
    """

    gamma: float | None = None  # None -> q == 1

    def __call__(self, tau):
        t = np.asarray(tau, dtype=float)
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ValueError("weight argument must lie in (0, 1)")
        if self.gamma is None:
            out = np.ones_like(t)
        else:
            out = (t * (1.0 - t)) ** self.gamma
        return float(out) if out.ndim == 0 else out

    @property
    def descriptor(self):
        if self.gamma is None:
            return "one"
        return f"power:g={self.gamma:g}"

    def admissible(self):
        return self.gamma is None or 0.0 <= self.gamma < 0.5


WEIGHT_ONE = Weight()


def parse_weight(text):
    """Parse ``one`` or ``power:g=0.25`` into a Weight."""
    t = text.strip().lower()
    if t == "one":
        return WEIGHT_ONE
    if t.startswith("power:g="):
        return Weight(gamma=float(t[len("power:g="):]))
    raise ValueError(f"unknown weight {text!r}; use 'one' or 'power:g=<gamma>'")


def weight_admissible(weight):
    return weight.admissible()


def weight_integral(weight, c, *, limit=200):
    """Tail-control integral I(q, c); infinite for inadmissible weights."""
    from scipy.integrate import quad

    if not weight.admissible():
        return math.inf

    def integrand(t):
        u = t * (1.0 - t)
        return math.exp(-c * weight(t) ** 2 / u) / u

    val, _ = quad(integrand, 0.0, 1.0, limit=limit, points=[0.5])
    return val


def prefactor(n, k):
    """k^2 (n-k)^2 / n^3; symmetric under k -> n - k."""
    k = float(k)
    n = float(n)
    return k * k * (n - k) * (n - k) / (n * n * n)


def statistic_value(theta_left, theta_right, omega, n, k, weight=WEIGHT_ONE):
    """The weighted quadratic form for one split; always >= 0 for PSD omega."""
    diff = np.asarray(theta_left, dtype=float) - np.asarray(theta_right, dtype=float)
    q = weight(k / n)
    return float(prefactor(n, k) * (diff @ np.asarray(omega) @ diff) / (q * q))


def statistic_at(model, y, k, omega, weight=WEIGHT_ONE, *,
                 warm_left=None, warm_right=None):
    """Fit both sides of the split at k and evaluate the statistic."""
    y = np.asarray(y)
    n = len(y)
    fl = fit(model, Segment(y, 1, k), warm=warm_left)
    fr = fit(model, Segment(y, k + 1, n), warm=warm_right)
    return statistic_value(fl.theta, fr.theta, omega, n, k, weight)


def auto_window(n, d):
    """Default u_n = v_n = floor(log(n)^2), floored at the minimum fit length."""
    return max(int(math.log(n) ** 2), min_segment_length(d))


# the short-half information may be evaluated at a wildly overfitted
# maximiser; its spectrum is confined to this factor of the long half's
INFO_CLIP = 3.0


def _spectral_clip(om, ref, factor=INFO_CLIP):
    """Clip ``om``'s spectrum to [1/factor, factor] relative to ``ref``.

    Whitens by the reference matrix, clips eigenvalues, and maps back;
    the identity when om == ref, symmetric PSD always, and inert
    asymptotically once both estimates converge to the same matrix.
    """
    lam_r, vec_r = np.linalg.eigh(0.5 * (ref + ref.T))
    lam_r = np.maximum(lam_r, 1e-12 * max(lam_r.max(), 1.0))
    white = vec_r * (lam_r ** -0.5)
    mid = white.T @ om @ white
    lam, vec = np.linalg.eigh(0.5 * (mid + mid.T))
    lam = np.clip(lam, 1.0 / factor, factor)
    back = vec_r * (lam_r ** 0.5)
    out = back @ (vec * lam) @ vec.T @ back.T
    return 0.5 * (out + out.T)


@dataclass
class TestReport:
    statistic: float
    ks: np.ndarray
    curve: np.ndarray        # C_{n,k}; NaN at invalid splits
    valid: np.ndarray
    critical_value: float
    alpha: float
    reject: bool
    t_hat: int
    fit_left: FitResult
    fit_right: FitResult
    u_n: int
    v_n: int
    weight: str
    model: str
    n: int
    invalid_count: int
    reliability_warning: bool


def _fit_or_none(model, seg, warm=None, **kwargs):
    try:
        return fit(model, seg, warm=warm, **kwargs)
    except (FitError, NumericDegeneracy, SegmentTooShort):
        return None


# cap for the sweep's low-persistence companion chain
SWEEP_LOW_CAP = 0.65


def sweep_fits(model, y, ks, side, *, warm_starts=True, x_init=None):
    """Segment fits for every split point, reusing neighbouring solutions.

    ``side='left'`` fits [1, k] for ascending k; ``side='right'`` fits
    [k+1, n] in descending order.  Two warm chains run side by side: the
    unrestricted chain follows the maximiser, while a companion chain
    constrained to contraction <= SWEEP_LOW_CAP supplies the stable
    representative of flat persistence ridges.  At every split the two
    candidates go through the same likelihood-tie rule as ``fit`` (ties
    resolve to the smaller contraction), so the selection is uniform in k.
    """
    from .mle import TIE_TOL, _capped_model, ascend_candidate, result_from_candidate

    y = np.asarray(y)
    n = len(y)
    order = ks if side == "left" else ks[::-1]
    capped = _capped_model(model, SWEEP_LOW_CAP)
    out = {}
    warm_main = None
    warm_low = None
    for k in order:
        seg = (Segment(y, 1, int(k), x_init) if side == "left"
               else Segment(y, int(k) + 1, n, x_init))

        if warm_main is None or not warm_starts:
            f = _fit_or_none(model, seg)
            out[int(k)] = f
            if f is not None:
                warm_main = f.theta
                warm_low = capped.space.project(f.theta) if capped else None
            continue

        cand_main = ascend_candidate(model, seg, warm_main)
        cand_low = None
        if capped is not None and warm_low is not None:
            cand_low = ascend_candidate(capped, seg, warm_low)
        if cand_main is None:
            f = _fit_or_none(model, seg)
            out[int(k)] = f
            if f is not None:
                warm_main = f.theta
                warm_low = capped.space.project(f.theta) if capped else None
            continue
        if cand_low is not None and cand_low[1] > cand_main[1]:
            # the restricted chain found a better basin; re-centre on it
            refined = ascend_candidate(model, seg, cand_low[0])
            if refined is not None and refined[1] >= cand_main[1]:
                cand_main = refined

        chosen = cand_main
        if cand_low is not None and cand_low[1] >= cand_main[1] - TIE_TOL:
            d_low = sum(model.contraction_coefficients(cand_low[0]))
            d_main = sum(model.contraction_coefficients(cand_main[0]))
            if d_low < d_main:
                chosen = cand_low
        out[int(k)] = result_from_candidate(model, seg, chosen)
        warm_main = cand_main[0]
        if cand_low is not None:
            warm_low = cand_low[0]
    return out


def run_test(model, y, *, alpha=0.05, weight=WEIGHT_ONE, u_n="auto", v_n="auto",
             c_alpha=None, x_init=None, cache_dir=None, critval_paths=None,
             critval_grid=None, critval_seed=None, workers=None):
    """Full off-line parameter-change test on a series of counts.

    Computes the split-sample information estimate, sweeps every admissible
    split point with warm-started segment fits, compares the maximum to the
    (1 - alpha) critical value of the weighted Brownian-bridge limit, and
    refits both segments at the estimated breakpoint.  ``c_alpha`` may be
    supplied to skip the critical-value lookup.
    """
    from . import critval as _critval

    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not model.family.in_support(y):
        raise ValueError(f"series values outside the {model.family.name} support")
    n = len(y)
    d = model.d
    if not weight.admissible():
        raise ValueError(f"weight {weight.descriptor} is not admissible")

    u = auto_window(n, d) if u_n == "auto" else int(u_n)
    v = auto_window(n, d) if v_n == "auto" else int(v_n)
    if v < min_segment_length(d) or n - v < min_segment_length(d) or v > n - v:
        raise SeriesTooShort(f"n={n} too short for v_n={v}")
    if not (d + 1 <= u <= n - d - 1):
        raise SeriesTooShort(f"n={n} too short for u_n={u}")

    # split-sample information, each half at its own maximiser.  The
    # short half cannot tell apart the maximisers on a flat persistence
    # ridge, yet the information varies wildly along it; among candidates
    # within the likelihood-ratio band, the fit whose own information
    # matrix lies closest to the long half's sharp estimate is selected,
    # which keeps the matrix consistent without touching its formula
    fit_hi = fit(model, Segment(y, u + 1, n, x_init))
    ref = omega_hat(model, fit_hi.theta, Segment(y, u + 1, n, fit_hi.x_init))
    fit_lo = fit(model, Segment(y, 1, u, x_init), tie_tol=3.0,
                 tie_key="info_match", tie_ref=ref)
    omega = _spectral_clip(omega_split(
        model, y, u, fit_lo.theta, fit_hi.theta,
        x_init_left=fit_lo.x_init, x_init_right=fit_hi.x_init,
    ), ref)

    ks = np.arange(v, n - v + 1)
    left = sweep_fits(model, y, ks, "left", x_init=x_init)
    right = sweep_fits(model, y, ks, "right", x_init=x_init)

    curve = np.full(len(ks), np.nan)
    valid = np.zeros(len(ks), dtype=bool)
    for i, k in enumerate(ks):
        fl, fr = left[int(k)], right[int(k)]
        if fl is None or fr is None:
            continue
        curve[i] = statistic_value(fl.theta, fr.theta, omega, n, int(k), weight)
        valid[i] = True

    invalid_count = int(np.count_nonzero(~valid))
    if not valid.any():
        raise DegenerateCurve("every split produced a degenerate fit")

    masked = np.where(valid, curve, -np.inf)
    i_hat = int(np.argmax(masked))  # first maximiser -> smallest k on ties
    t_hat = int(ks[i_hat])
    stat = float(curve[i_hat])

    if c_alpha is None:
        c_alpha = _critval.quantile(
            d, alpha, weight,
            m=critval_grid if critval_grid is not None else _critval.DEFAULT_GRID,
            n_paths=critval_paths if critval_paths is not None else _critval.DEFAULT_PATHS,
            seed=critval_seed if critval_seed is not None else _critval.DEFAULT_SEED,
            cache_dir=cache_dir,
            workers=workers,
        )

    refit_left = fit(model, Segment(y, 1, t_hat, x_init), warm=left[t_hat].theta)
    refit_right = fit(model, Segment(y, t_hat + 1, n, x_init), warm=right[t_hat].theta)

    return TestReport(
        statistic=stat,
        ks=ks,
        curve=curve,
        valid=valid,
        critical_value=float(c_alpha),
        alpha=float(alpha),
        reject=bool(stat > c_alpha),
        t_hat=t_hat,
        fit_left=refit_left,
        fit_right=refit_right,
        u_n=u,
        v_n=v,
        weight=weight.descriptor,
        model=model.descriptor,
        n=n,
        invalid_count=invalid_count,
        reliability_warning=invalid_count > INVALID_WARN_FRACTION * len(ks),
    )
