"""Monte Carlo size and power experiments with reproducible parallelism."""

from __future__ import annotations

import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import critval
from .cpt import parse_weight, run_test
from .models import parse_model
from .simulate import simulate_h0, simulate_h1


@dataclass(frozen=True)
class ExperimentPlan:
    """One scenario family: a model, parameters and replication settings.

    ``theta1`` set means a change scenario with the break at
    ``floor(n * t_star_frac)``; levels leave it None.
    """

    model: str
    theta0: tuple
    theta1: tuple | None = None
    t_star_frac: float = 0.5
    n_list: tuple = (500, 1000)
    replications: int = 100
    alpha: float = 0.05
    seed: int = 0
    weight: str = "one"
    burn_in: int = 500
    label: str = ""

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.theta1 is not None and tuple(self.theta1) == tuple(self.theta0):
            raise ValueError("change scenarios need theta1 != theta0")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self):
        t0 = ",".join(f"{v:g}" for v in self.theta0)
        if self.theta1 is None:
            return f"{self.model}|level|{t0}"
        t1 = ",".join(f"{v:g}" for v in self.theta1)
        return f"{self.model}|power|{t0}->{t1}"


@dataclass
class ScenarioResult:
    label: str
    n: int
    rate: float
    wilson_lo: float
    wilson_hi: float
    rejections: int
    completed: int
    anomalies: int
    mean_break_error: float | None
    median_abs_break_error: float | None
    seconds: float
    records: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    scenarios: list


def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z2 / (4 * trials * trials)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


def replication_seed(master_seed, label, n, rep):
    """Deterministic per-replication seed, independent of scheduling."""
    scenario_key = zlib.crc32(f"{label}|{n}".encode())
    return np.random.SeedSequence((master_seed, scenario_key, rep))


def _one_replication(args):
    (model_text, theta0, theta1, n, t_star, burn_in, alpha, weight_text,
     c_alpha, master_seed, label, rep) = args
    record = {"rep": rep, "anomaly": None}
    try:
        model = parse_model(model_text)
        weight = parse_weight(weight_text)
        seed = replication_seed(master_seed, label, n, rep)
        if theta1 is None:
            traj = simulate_h0(model, np.asarray(theta0), n,
                               burn_in=burn_in, seed=seed, keep_latent=False)
        else:
            traj = simulate_h1(model, np.asarray(theta0), np.asarray(theta1), n,
                               t_star, burn_in=burn_in, seed=seed, keep_latent=False)
        report = run_test(model, traj.y, alpha=alpha, weight=weight, c_alpha=c_alpha)
        record.update(
            statistic=report.statistic,
            reject=bool(report.reject),
            t_hat=int(report.t_hat),
            invalid_points=int(report.invalid_count),
        )
        if t_star is not None:
            record["break_error"] = int(report.t_hat) - int(t_star)
    except Exception as exc:  # anomalies are counted, never aborts
        record["anomaly"] = f"{type(exc).__name__}: {exc}"
    return record


def _run_scenario(plan, n, t_star, c_alpha, workers):
    args = [
        (plan.model, tuple(plan.theta0),
         tuple(plan.theta1) if plan.theta1 is not None else None,
         n, t_star, plan.burn_in, plan.alpha, plan.weight,
         c_alpha, plan.seed, plan.label, rep)
        for rep in range(plan.replications)
    ]
    start = time.perf_counter()
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one_replication, args, chunksize=1))
    else:
        records = [_one_replication(a) for a in args]
    seconds = time.perf_counter() - start

    records.sort(key=lambda r: r["rep"])
    ok = [r for r in records if r["anomaly"] is None]
    rejections = sum(r["reject"] for r in ok)
    rate = rejections / len(ok) if ok else float("nan")
    lo, hi = wilson_interval(rejections, len(ok))
    mean_err = median_abs = None
    if t_star is not None and ok:
        errs = np.array([r["break_error"] for r in ok], dtype=float)
        mean_err = float(np.mean(errs))
        median_abs = float(np.median(np.abs(errs)))
    return ScenarioResult(
        label=plan.label, n=n, rate=rate, wilson_lo=lo, wilson_hi=hi,
        rejections=rejections, completed=len(ok),
        anomalies=len(records) - len(ok),
        mean_break_error=mean_err, median_abs_break_error=median_abs,
        seconds=seconds, records=records,
    )


def _critical_value(plan, c_alpha, cache_dir, workers):
    if c_alpha is not None:
        return c_alpha
    model = parse_model(plan.model)
    return critval.quantile(
        model.d, plan.alpha, parse_weight(plan.weight),
        cache_dir=cache_dir, workers=workers,
    )


def run_level(plan, *, workers=None, c_alpha=None, cache_dir=None):
    """Empirical level: rejection frequency over H0 replications."""
    if plan.theta1 is not None:
        raise ValueError("level plans must not set theta1")
    ca = _critical_value(plan, c_alpha, cache_dir, workers)
    scenarios = [_run_scenario(plan, n, None, ca, workers) for n in plan.n_list]
    return ExperimentResult(plan=plan, scenarios=scenarios)


def run_power(plan, *, workers=None, c_alpha=None, cache_dir=None):
    """Empirical power plus breakpoint-accuracy summaries."""
    if plan.theta1 is None:
        raise ValueError("power plans require theta1")
    ca = _critical_value(plan, c_alpha, cache_dir, workers)
    scenarios = []
    for n in plan.n_list:
        t_star = int(n * plan.t_star_frac)
        if not 2 <= t_star <= n - 1:
            raise ValueError(f"t_star_frac {plan.t_star_frac} invalid for n={n}")
        scenarios.append(_run_scenario(plan, n, t_star, ca, workers))
    return ExperimentResult(plan=plan, scenarios=scenarios)
