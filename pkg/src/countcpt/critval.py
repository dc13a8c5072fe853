"""Critical values of the weighted Brownian-bridge supremum by Monte Carlo.

The null limit of the test statistic is sup over tau in (0, 1) of
``||W_d(tau)||^2 / q(tau)^2`` with W_d a d-dimensional Brownian bridge.
Quantiles are estimated from discretised bridges on a uniform grid:
independent Gaussian increments are cumulated to a motion B and pinned by
W(tau_j) = B(tau_j) - tau_j B(1); the supremum is taken over interior grid
points.  Results are cached on disk keyed by every simulation setting.
"""

from __future__ import annotations

import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cpt import WEIGHT_ONE, Weight, parse_weight

DEFAULT_GRID = 4097
DEFAULT_PATHS = 200_000
DEFAULT_SEED = 42
STANDARD_ALPHAS = (0.10, 0.05, 0.025, 0.01)

_CHUNK = 1_000
_CACHE_FILE = "critval_cache_v1.csv"
_CACHE_HEADER = "d,q,m,paths,seed,alpha,value"


def default_cache_dir():
    env = os.environ.get("CPT_CACHE_DIR")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "countcpt")


def _sup_chunk(d, weight, m, count, seed_seq):
    """Suprema of ``count`` discretised weighted bridge paths.

    Paths are built in float32 (the 1e-7 rounding is far below the Monte
    Carlo resolution) with unit increments; the 1/m increment variance is
    applied once on the reduced per-grid-point norms.
    """
    rng = np.random.default_rng(seed_seq)
    grid = np.arange(1, m + 1, dtype=np.float32) / np.float32(m)
    b = rng.standard_normal((count, d, m), dtype=np.float32)
    np.cumsum(b, axis=2, out=b)
    b -= grid * b[:, :, -1:]
    s = np.einsum("pdm,pdm->pm", b, b)[:, : m - 1].astype(float)
    s /= m
    if weight.gamma is not None:
        tau = np.arange(1, m, dtype=float) / m  # interior; pinned at tau = 1
        s /= weight(tau) ** 2
    return s.max(axis=1)


def _sup_chunk_star(args):
    return _sup_chunk(*args)


def sup_samples(d, weight=WEIGHT_ONE, *, m=DEFAULT_GRID, n_paths=DEFAULT_PATHS,
                seed=DEFAULT_SEED, workers="auto"):
    """Monte Carlo sample of the weighted bridge supremum.

    Chunks are seeded independently from ``seed`` and concatenated in chunk
    order, so the result is identical for any worker count.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if m < 64:
        raise ValueError("grid size must be >= 64")
    sizes = [_CHUNK] * (n_paths // _CHUNK)
    if n_paths % _CHUNK:
        sizes.append(n_paths % _CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(d, weight, m, c, s) for c, s in zip(sizes, seeds)]

    if workers == "auto":
        workers = min(2, os.cpu_count() or 1) if n_paths >= 4 * _CHUNK else None
    if workers and workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sup_chunk_star, args, chunksize=4))
    else:
        parts = [_sup_chunk(*a) for a in args]
    return np.concatenate(parts)


def simulate_sup(d, weight, m, rng):
    """One supremum draw (thin wrapper over the batched path builder)."""
    return float(_sup_chunk(d, weight, m, 1, rng)[0])


@dataclass
class QuantileTable:
    """Cached quantiles of the bridge supremum for one simulation setting."""

    d: int
    weight: str
    m: int
    n_paths: int
    seed: int
    values: dict  # alpha -> c_alpha

    def __post_init__(self):
        alphas = sorted(self.values)
        cs = [self.values[a] for a in alphas]
        if any(c <= 0 for c in cs):
            raise ValueError("critical values must be positive")
        if any(cs[i] <= cs[i + 1] for i in range(len(cs) - 1)):
            raise ValueError("critical values must decrease in alpha")


def _cache_path(cache_dir):
    return os.path.join(cache_dir if cache_dir is not None else default_cache_dir(),
                        _CACHE_FILE)


def _key(d, weight, m, n_paths, seed):
    return (str(int(d)), weight.descriptor, str(int(m)), str(int(n_paths)), str(int(seed)))


def _read_cache(path):
    rows = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != _CACHE_HEADER:
                return rows
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != 7:
                    continue
                rows[tuple(parts[:5]) + (parts[5],)] = float(parts[6])
    except OSError:
        pass
    return rows


def _write_cache(path, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(_CACHE_HEADER + "\n")
        for key, val in sorted(rows.items()):
            fh.write(",".join(key) + f",{val!r}\n")
    os.replace(tmp, path)


def _fmt_alpha(alpha):
    return f"{float(alpha):.10g}"


def quantile(d, alpha, weight=WEIGHT_ONE, *, m=DEFAULT_GRID, n_paths=DEFAULT_PATHS,
             seed=DEFAULT_SEED, cache_dir=None, workers="auto"):
    """(1 - alpha) quantile of the weighted bridge supremum, disk-cached."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    path = _cache_path(cache_dir)
    rows = _read_cache(path)
    key = _key(d, weight, m, n_paths, seed)
    hit = rows.get(key + (_fmt_alpha(alpha),))
    if hit is not None:
        return hit

    samples = sup_samples(d, weight, m=m, n_paths=n_paths, seed=seed, workers=workers)
    wanted = sorted(set(STANDARD_ALPHAS) | {float(alpha)})
    for a in wanted:
        rows[key + (_fmt_alpha(a),)] = float(np.quantile(samples, 1.0 - a))
    _write_cache(path, rows)
    return rows[key + (_fmt_alpha(alpha),)]


def quantile_table(d, alphas=STANDARD_ALPHAS, weight=WEIGHT_ONE, *, m=DEFAULT_GRID,
                   n_paths=DEFAULT_PATHS, seed=DEFAULT_SEED, cache_dir=None,
                   workers="auto"):
    """QuantileTable for several levels from a single sample batch."""
    values = {}
    for a in alphas:
        values[float(a)] = quantile(
            d, a, weight, m=m, n_paths=n_paths, seed=seed,
            cache_dir=cache_dir, workers=workers,
        )
    return QuantileTable(d=d, weight=weight.descriptor, m=m, n_paths=n_paths,
                         seed=seed, values=values)
