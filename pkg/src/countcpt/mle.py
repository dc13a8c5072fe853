"""Constrained maximum likelihood over an observation segment.

Projected quasi-Newton ascent on the analytic score with backtracking,
followed by a Fisher-scoring polish that drives the projected-gradient
sup-norm to the requested tolerance.  Box and half-space constraints are
handled by the model space's projection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .likelihood import (
    NumericDegeneracy,
    Segment,
    _kernel_eval,
    resolve_x_init,
)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
BOUNDARY_ATOL = 1e-8


class FitError(RuntimeError):
    """No start produced a usable maximiser."""


class SegmentTooShort(ValueError):
    pass


@dataclass
class FitResult:
    theta: np.ndarray
    loglik: float
    grad_inf_norm: float   # sup-norm of the projected gradient at theta
    iterations: int
    evals: int
    boundary_active: tuple
    converged: bool
    x_init: float


def min_segment_length(d):
    return max(d + 1, 10)


def default_starts(model, segment):
    """Deterministic cold starts, all matching the sample mean.

    Three stationary-mean-matched points probing the main explanations of
    the data: little feedback, strong observation feedback, and strong
    mean persistence.  alpha0 is set so the implied stationary mean equals
    the segment's sample mean in each case.
    """
    ybar = max(float(np.mean(segment.values)), 1e-3)
    d = model.d
    feedback = [
        (0.1, 0.1),   # low feedback
        (0.5, 0.1),   # observation-driven
        (0.15, 0.6),  # persistence-driven
    ]
    starts = []
    for a, b in feedback:
        th = np.empty(d)
        th[0] = ybar * (1.0 - a - b)
        if d == 3:
            th[1], th[2] = a, b
        else:
            th[1] = th[2] = a
            th[3] = b
        starts.append(model.space.project(th))
    return starts


def _active_constraints(model, theta):
    sp = model.space
    names = model.param_names
    out = []
    for i in range(sp.d):
        if theta[i] - sp.lower[i] <= BOUNDARY_ATOL:
            out.append(f"lower:{names[i]}")
        if sp.upper[i] - theta[i] <= BOUNDARY_ATOL:
            out.append(f"upper:{names[i]}")
    cap = 1.0 - sp.eps
    for idx in sp.sum_constraints:
        if cap - sum(theta[i] for i in idx) <= BOUNDARY_ATOL:
            out.append("sum:" + "+".join(names[i] for i in idx))
    return tuple(out)


def _noise(v):
    # slack for likelihood comparisons at the float rounding floor
    return 1e-13 * (1.0 + abs(v))


def _modified_newton(g, hess):
    """Newton step with eigenvalues of -H replaced by |.| (floored).

    Exact Newton where the likelihood is locally concave, and still a
    strict ascent direction at saddles and along flat ridges.
    """
    try:
        lam, vec = np.linalg.eigh(-hess)
    except np.linalg.LinAlgError:
        return g
    scale = float(np.max(np.abs(lam)))
    if not np.isfinite(scale) or scale == 0.0:
        return g
    lam = np.maximum(np.abs(lam), 1e-8 * scale)
    dirn = vec @ ((vec.T @ g) / lam)
    return dirn if np.all(np.isfinite(dirn)) else g


_ACTIVE_ATOL = 1e-8


def _cone_projection(normals, g):
    """Project g onto the tangent cone {v : n.v <= 0 for tight normals n}.

    Moreau decomposition by support enumeration: find multipliers
    lambda >= 0 on a subset S of normals with g - N_S lambda orthogonal to
    N_S and feasible for the rest.  The projection is unique; at most a
    handful of tight constraints ever occur here.

    Returns (projected gradient, support indices).
    """
    c = len(normals)
    if c == 0:
        return g, ()
    scale = 1.0 + float(np.max(np.abs(g)))
    order = sorted(range(1 << c), key=int.bit_count)
    for mask in order:
        idx = [i for i in range(c) if mask >> i & 1]
        if idx:
            ns = np.array([normals[i] for i in idx]).T
            lam, *_ = np.linalg.lstsq(ns, g, rcond=None)
            if np.any(lam < -1e-12 * scale):
                continue
            r = g - ns @ lam
        else:
            r = g
        rest = [float(normals[j] @ r) for j in range(c) if j not in idx]
        if not rest or max(rest) <= 1e-10 * scale:
            return r, tuple(idx)
    return g, ()


class _Face:
    """Working face of the feasible set at an iterate.

    Determines the binding constraints from the exact tangent-cone
    projection of the score, snaps the iterate onto them, and provides the
    face's tangent basis so search directions never fight the projection.
    """

    def __init__(self, space, th, g):
        d = space.d
        self.space = space
        cap = 1.0 - space.eps
        normals = []
        kinds = []  # ("lo"/"hi", i) or ("sum", idx)
        for i in range(d):
            if th[i] - space.lower[i] <= _ACTIVE_ATOL:
                e = np.zeros(d)
                e[i] = -1.0
                normals.append(e)
                kinds.append(("lo", i))
            elif space.upper[i] - th[i] <= _ACTIVE_ATOL:
                e = np.zeros(d)
                e[i] = 1.0
                normals.append(e)
                kinds.append(("hi", i))
        for idx in space.sum_constraints:
            if cap - sum(th[i] for i in idx) <= _ACTIVE_ATOL:
                e = np.zeros(d)
                e[list(idx)] = 1.0
                normals.append(e)
                kinds.append(("sum", idx))

        self.pg_vec, support = _cone_projection(normals, g)
        snapped = th.copy()
        binding = []
        for j in support:
            kind, where = kinds[j]
            if kind == "lo":
                snapped[where] = space.lower[where]
            elif kind == "hi":
                snapped[where] = space.upper[where]
            binding.append(normals[j])
        for j in support:
            kind, where = kinds[j]
            if kind == "sum":
                block = list(where)
                s = sum(snapped[i] for i in block)
                if s > 0:
                    for i in block:
                        snapped[i] *= cap / s
        self.theta = snapped
        if binding:
            _, sv, vt = np.linalg.svd(np.array(binding))
            rank = int(np.sum(sv > 1e-12))
            self.basis = vt[rank:].T  # (d, f); f may be 0 when fully pinned
        else:
            self.basis = np.eye(d)

    def reduced_grad_norm(self, g=None):
        return float(np.max(np.abs(self.pg_vec))) if self.pg_vec.size else 0.0

    def steepest(self):
        return self.pg_vec

    def newton(self, g, hess):
        z = self.basis
        if z.shape[1] == 0:
            return np.zeros_like(g)
        if z.shape[1] == self.space.d:
            return _modified_newton(g, hess)
        dirn = z @ _modified_newton(z.T @ g, z.T @ hess @ z)
        return dirn if np.all(np.isfinite(dirn)) else self.pg_vec


def _repair(space, th):
    """Exact feasibility repair for optimizer candidates.

    Box-clips, then rescales any violated sum block exactly onto its cap
    (the public projection restores interior slack instead, which would
    make cap-attaining maximisers unreachable for the line search).
    """
    out = np.clip(th, space.lower, space.upper)
    if not space.sum_constraints:
        return out
    cap = 1.0 - space.eps
    worst = max(float(sum(out[i] for i in idx)) for idx in space.sum_constraints)
    if worst > cap:
        block = sorted({i for idx in space.sum_constraints for i in idx})
        scale = cap / worst
        for i in block:
            out[i] = max(out[i] * scale, space.lower[i])
    return out


def _cap_step(direction, theta):
    """Trust-region style bound: no sup-norm move beyond max(1, |theta|)."""
    limit = max(1.0, float(np.max(np.abs(theta))))
    size = float(np.max(np.abs(direction)))
    if size > limit:
        return direction * (limit / size)
    return direction


def _ascend(model, segment, theta0, tol, max_iter):
    """Maximise the segment log-likelihood from one start.

    Active-set ascent: at each iterate the (nearly) tight constraints with
    outward score pin a working face; a modified-Newton step restricted to
    the face (gradient fallback) is backtracked under an Armijo test.  The
    optimality measure is the sup-norm of the score's tangent component,
    which vanishes exactly at constrained maximisers.

    Returns (theta, loglik, pg_norm, iterations, evals, converged).
    """
    space = model.space

    th = space.project(np.asarray(theta0, dtype=float))
    ll, g, hess, om = _kernel_eval(model, th, segment, validate=False)
    evals = 1
    if not np.isfinite(ll):
        raise FitError("start produced a non-finite likelihood")

    ll_start = ll
    face = _Face(space, th, g)
    th = face.theta
    pgn = face.reduced_grad_norm()
    iters = 0
    stalls = 0
    pg_mark, ll_mark = pgn, ll
    converged = pgn <= tol

    # stop on convergence, failure of both search directions, or a stall:
    # several iterations with neither the reduced gradient contracting nor
    # the likelihood moving beyond rounding noise
    while not converged and iters < max_iter and stalls < 8:
        iters += 1
        newton = _cap_step(face.newton(g, hess), th)
        sg = face.steepest()
        sg_norm = float(np.max(np.abs(sg))) if sg.size else 0.0
        grad = _cap_step(sg / max(1.0, sg_norm), th) if sg_norm > 0 else None
        progressed = False
        for direction in (newton, grad):
            if direction is None or not np.any(direction):
                continue
            step_scale = 1.0
            accepted = False
            for _ in range(40):
                cand = _repair(space, th + step_scale * direction)
                step = cand - th
                if not np.any(step):
                    step_scale *= 0.5
                    continue
                ll2, g2, hess2, om2 = _kernel_eval(model, cand, segment, validate=False)
                evals += 1
                gain = float(g @ step)
                if np.isfinite(ll2) and ll2 >= ll + 1e-4 * max(gain, 0.0) - _noise(ll):
                    accepted = True
                    break
                step_scale *= 0.5
            if not accepted:
                continue
            # a step only counts when it moves the likelihood beyond noise
            # or sharpens optimality; otherwise fall through to the
            # gradient direction
            face2 = _Face(space, cand, g2)
            pgn2 = face2.reduced_grad_norm()
            if ll2 > ll + _noise(ll) or pgn2 < pgn:
                th, ll, g, hess, om = face2.theta, ll2, g2, hess2, om2
                face, pgn = face2, pgn2
                progressed = True
                break
        if not progressed:
            break
        if pgn <= tol:
            converged = True
        elif pgn < 0.9 * pg_mark or ll > ll_mark + 1e-9 * (1.0 + abs(ll_mark)):
            stalls = 0
            pg_mark, ll_mark = min(pgn, pg_mark), max(ll, ll_mark)
        else:
            stalls += 1

    return th, ll, pgn, iters, evals, converged, ll_start, om


# candidates within this many log-likelihood units are statistically
# indistinguishable ties; short sparse segments produce razor-flat ridges
# whose arbitrary maximiser can carry an exploding information matrix
TIE_TOL = 0.5

# contraction caps for the extra tie-break candidates on such ridges
DIVERSIFY_CAPS = (0.35, 0.65)


def _capped_model(model, cap):
    """Copy of the model whose contraction sum is capped at ``cap``."""
    from dataclasses import replace as dc_replace

    space = model.space
    if not space.sum_constraints or cap >= 1.0 - space.eps:
        return None
    return dc_replace(model, space=dc_replace(space, eps=1.0 - cap))


def fit(model, segment, *, warm=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
        cold_starts=True, tie_tol=TIE_TOL, tie_key="delta", tie_ref=None):
    """Best constrained maximiser of the segment log-likelihood.

    ``warm`` prepends a caller-supplied start (the change-point sweep
    passes the neighbouring split's estimate); with ``cold_starts=False``
    only the warm start is used.

    Cold fits also ascend under temporarily tightened contraction caps.
    When candidates end within TIE_TOL log-likelihood units of the best (a
    flat ridge), the tie resolves toward the smallest contraction
    coefficient, which keeps the information matrix away from the
    1/(1-beta) blow-up; the winner never falls below any start's own
    likelihood, and sharply identified fits are unaffected because their
    likelihood separates the candidates.  Deterministic for fixed inputs.
    """
    m = segment.length
    if m < min_segment_length(model.d):
        raise SegmentTooShort(
            f"segment length {m} below minimum {min_segment_length(model.d)}"
        )
    yseg = segment.values
    if np.all(yseg == yseg[0]):
        raise FitError("constant segment: the maximiser is not identifiable")

    x_init = resolve_x_init(model, segment)
    seg = replace(segment, x_init=x_init)

    starts = []
    if warm is not None:
        starts.append(np.asarray(warm, dtype=float))
    diversify = cold_starts or not starts
    if diversify:
        starts.extend(default_starts(model, seg))

    results = []
    failures = []
    floor = -np.inf
    for th0 in starts:
        if any(np.max(np.abs(r[0] - th0)) <= 1e-12 for r in results):
            continue
        try:
            out = _ascend(model, seg, th0, tol, max_iter)
        except (NumericDegeneracy, FitError) as exc:
            failures.append(str(exc))
            continue
        results.append(out)
        floor = max(floor, out[6])
    if results and diversify:
        top_delta = sum(model.contraction_coefficients(
            max(results, key=lambda r: r[1])[0]))
        for cap in DIVERSIFY_CAPS:
            if top_delta <= cap + 0.1:
                continue
            capped = _capped_model(model, cap)
            if capped is None:
                continue
            th0 = capped.space.project(default_starts(model, seg)[0])
            try:
                out = _ascend(capped, seg, th0, tol, max_iter)
            except (NumericDegeneracy, FitError):
                continue
            # re-measure optimality in the true space; the capped point is
            # usually not stationary there, only a tie-break candidate
            _, g_w, _, om_w = _kernel_eval(model, out[0], seg, validate=False)
            face = _Face(model.space, out[0], g_w)
            pgn_w = face.reduced_grad_norm()
            results.append((out[0], out[1], pgn_w, out[3], out[4] + 1,
                            pgn_w <= tol, out[6], om_w))
    if not results:
        raise FitError("all starts failed: " + "; ".join(failures))

    top = max(r[1] for r in results)
    cutoff = max(top - tie_tol, floor)
    band = [(i, r) for i, r in enumerate(results) if r[1] >= cutoff]
    if tie_key == "info":
        measure = lambda r: float(np.trace(r[7]))
    elif tie_key == "info_match":
        measure = lambda r: float(np.linalg.norm(r[7] - tie_ref))
    else:
        measure = lambda r: sum(model.contraction_coefficients(r[0]))
    _, best = min(band, key=lambda ir: (measure(ir[1]), -ir[1][1], ir[0]))

    th, ll, pgn, iters, evals, converged, _, _ = best
    return FitResult(
        theta=th,
        loglik=ll,
        grad_inf_norm=pgn,
        iterations=iters,
        evals=evals,
        boundary_active=_active_constraints(model, th),
        converged=converged,
        x_init=x_init,
    )


def fit_range(model, y, k, kp, *, x_init=None, **kwargs):
    """Fit on the 1-based inclusive observation range [k, kp]."""
    return fit(model, Segment(np.asarray(y), k, kp, x_init), **kwargs)


def ascend_candidate(model, segment, theta0, *, tol=DEFAULT_TOL,
                     max_iter=DEFAULT_MAX_ITER):
    """Single-start ascent for sweep chains.

    Returns (theta, loglik, pg_norm, converged) or None when the start
    fails; unlike ``fit`` this runs no extra starts and no tie-breaking.
    """
    x_init = resolve_x_init(model, segment)
    seg = replace(segment, x_init=x_init)
    try:
        out = _ascend(model, seg, np.asarray(theta0, dtype=float), tol, max_iter)
    except (NumericDegeneracy, FitError):
        return None
    return out[0], out[1], out[2], out[5]


def result_from_candidate(model, segment, cand):
    """Package a sweep-chain candidate as a FitResult."""
    th, ll, pgn, converged = cand
    return FitResult(
        theta=th,
        loglik=ll,
        grad_inf_norm=pgn,
        iterations=0,
        evals=0,
        boundary_active=_active_constraints(model, th),
        converged=converged,
        x_init=resolve_x_init(model, segment),
    )
