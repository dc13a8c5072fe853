"""Trajectory generation under a constant parameter or a single change."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BURN_IN = 500


@dataclass
class Trajectory:
    """Observed counts plus optional latent means and generation metadata."""

    y: np.ndarray
    x_latent: np.ndarray | None
    meta: dict


def _generate(model, theta_pre, theta_post, n, t_star, burn_in, seed, keep_latent):
    model.require_valid(theta_pre)
    th1 = np.asarray(theta_pre, dtype=float)
    th2 = None
    if theta_post is not None:
        model.require_valid(theta_post)
        th2 = np.asarray(theta_post, dtype=float)
        if np.array_equal(th1, th2):
            raise ValueError("pre- and post-change parameters must differ")
        if not 2 <= t_star <= n - 1:
            raise ValueError(f"change index must lie in [2, n-1], got {t_star}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")

    rng = np.random.default_rng(seed)
    fam = model.family
    total = burn_in + n
    ys = np.empty(total, dtype=np.int64)
    xs = np.empty(total, dtype=float) if keep_latent else None

    x = model.sim_init_mean(th1)
    for a in range(total):
        if xs is not None:
            xs[a] = x
        ys[a] = fam.sample(x, rng)
        # the mean for retained position (a+1-burn_in) switches regime at t_star+1
        th = th2 if (th2 is not None and a + 1 - burn_in >= t_star) else th1
        x = model.mean_step(th, x, ys[a], validate=False)

    meta = {
        "seed": seed,
        "model": model.descriptor,
        "theta": tuple(th1),
        "theta_post": tuple(th2) if th2 is not None else None,
        "t_star": t_star if th2 is not None else None,
        "burn_in": burn_in,
        # the post-change regime continues the pre-change recursion state
        "handoff": "single-filtration",
    }
    return Trajectory(
        y=ys[burn_in:],
        x_latent=xs[burn_in:] if xs is not None else None,
        meta=meta,
    )


def simulate_h0(model, theta, n, *, burn_in=DEFAULT_BURN_IN, seed=None, keep_latent=True):
    """Simulate ``n`` observations under a constant parameter.

    The recursion starts at the model's stationary mean and discards
    ``burn_in`` initial steps.  Deterministic given ``seed``.
    """
    return _generate(model, theta, None, n, None, burn_in, seed, keep_latent)


def simulate_h1(model, theta_pre, theta_post, n, t_star, *, burn_in=DEFAULT_BURN_IN,
                seed=None, keep_latent=True):
    """Simulate with a parameter change after observation ``t_star``.

    Observations 1..t_star follow ``theta_pre``; from t_star+1 onward the
    recursion continues from the current state under ``theta_post``.
    """
    return _generate(model, theta_pre, theta_post, n, t_star, burn_in, seed, keep_latent)
