"""Independent reference implementations used by the tests.

Everything here is written from the model definitions directly (plain
Python loops and closed-form expressions), staying away from the library's
filtering code so it can serve as an oracle for it.
"""

import math

import numpy as np


def naive_loglik(kind, theta, y, k, kp, x_init, r=None, level=None):
    """Direct-summation conditional log-likelihood.

    kind: 'poisson' | 'nb' | 'bernoulli'; linear recursion unless
    ``level`` is given, then the threshold recursion with that level.
    """
    theta = list(theta)
    x = float(x_init)
    total = 0.0
    for t in range(k, kp + 1):
        if t > k:
            yprev = float(y[t - 2])
            if level is None:
                a0, a, b = theta
                x = a0 + a * yprev + b * x
            else:
                a0, a1, a2, b = theta
                x = a0 + a1 * max(yprev - level, 0.0) + a2 * min(yprev, level) + b * x
        yt = float(y[t - 1])
        if kind == "poisson":
            eta = math.log(x)
            big_a = x
        elif kind == "nb":
            eta = math.log(x / (x + r))
            big_a = r * math.log(r / (1.0 - math.exp(eta)))
        else:
            eta = math.log(x / (1.0 - x))
            big_a = math.log(1.0 + math.exp(eta))
        total += eta * yt - big_a
    return total


def kolmogorov_sup_sq_quantile(p, terms=200):
    """Quantile of sup |W_1|^2 from the Kolmogorov series.

    P(sup_t |W_1(t)| <= s) = 1 - 2 sum_{j>=1} (-1)^{j+1} exp(-2 j^2 s^2);
    solved for the squared value x = s^2 by bisection.
    """

    def cdf_sq(x):
        return 1.0 - 2.0 * sum(
            (-1) ** (j + 1) * math.exp(-2.0 * j * j * x) for j in range(1, terms)
        )

    lo, hi = 1e-6, 20.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf_sq(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def central_gradient(f, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        step = h * max(1.0, abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2.0 * step)
    return g


def central_hessian(f, theta, h=1e-4):
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    out = np.zeros((d, d))
    steps = [h * max(1.0, abs(theta[i])) for i in range(d)]
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = steps[i]
            ej[j] = steps[j]
            out[i, j] = (
                f(theta + ei + ej) - f(theta + ei - ej)
                - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return out


def draw_interior_theta(model, rng, max_total=0.8):
    """Random parameter vector strictly inside the model's space."""
    d = model.d
    total = rng.uniform(0.15, max_total)
    if model.family.name == "bernoulli":
        w = rng.dirichlet(np.ones(3))
        th = np.array([max(total * w[0], 2e-3), total * w[1], total * w[2]])
    elif d == 3:
        w = rng.dirichlet(np.ones(2))
        th = np.array([rng.uniform(0.2, 2.5), total * w[0], total * w[1]])
    else:
        w = rng.dirichlet(np.ones(3))
        th = np.array(
            [rng.uniform(0.2, 2.5), total * w[0], total * w[1], total * w[2]]
        )
    return model.space.project(th)
