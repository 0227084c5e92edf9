"""EFID pairs from transferable attacks: D0 = D^q, D1 = attack output."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Budget, BudgetExceeded, LearningTask, SampleSource, rng_stream
from .stats import run_indistinguishability_suite, std_error, wilson_interval

Sampler = Callable[[np.random.Generator], tuple]


def eta_target(p: float, c: float, eps: float, q: int) -> float:
    """1/2 (p + c - 1 - exp(-eps q / 3))."""
    return 0.5 * (p + c - 1.0 - math.exp(-eps * q / 3.0))


@dataclass
class EfidPair:
    """Two samplers of (task, x) pairs.  ``T`` bounds the samples either
    sampler may draw; ``T_prime`` is the distinguisher budget."""

    d0: Sampler
    d1: Sampler
    eps: float
    q: int
    T: Budget
    T_prime: Budget
    delta: float = 0.0
    p: float | None = None
    c: float | None = None
    task_factory: Callable = field(default=None, repr=False)

    @property
    def eta(self) -> float | None:
        if self.p is None or self.c is None:
            return None
        return eta_target(self.p, self.c, self.eps, self.q)


def _factory(task) -> Callable[[int], LearningTask]:
    if isinstance(task, LearningTask):
        return lambda seed: task
    return task


def build_efid(attack, task, eps: float, q: int, T: Budget | None = None, T_prime: Budget | None = None,
               delta: float = 0.0, p: float | None = None, c: float | None = None) -> EfidPair:
    """``task`` is a fixed LearningTask or a factory seed -> task."""
    factory = _factory(task)
    T = T if T is not None else Budget()

    def d0(rng):
        t = factory(int(rng.integers(0, 2**62)))
        x = SampleSource(t, rng, T.fresh()).draw_inputs(q)
        return t, x

    def d1(rng):
        t = factory(int(rng.integers(0, 2**62)))
        x = attack.attack(SampleSource(t, rng, T.fresh()), rng).queries
        if len(x) != q:
            raise ValueError(f"attack produced {len(x)} queries, expected {q}")
        return t, x

    return EfidPair(d0, d1, eps, q, T, T_prime if T_prime is not None else T, delta, p, c, factory)


def efid_distinguish(learner, eps: float, x, task, rng, budget: Budget | None = None) -> int:
    """Learn, answer x, return 0 iff the harness oracle says err(x, y) <= 2 eps."""
    src = SampleSource(task, rng, budget.fresh() if budget is not None else Budget())
    try:
        y = learner.answer(x, src, rng)
    except BudgetExceeded:
        return 0
    return int(task.empirical_error(x, y) > 2 * eps)


class OracleFreeSource:
    """What a bounded distinguisher gets: samples and public data, no task handle."""

    __slots__ = ("_src",)

    def __init__(self, src: SampleSource):
        self._src = src

    def draw(self, n):
        return self._src.draw(n)

    def draw_inputs(self, n):
        return self._src.draw_inputs(n)

    @property
    def public(self):
        return self._src.public

    @property
    def budget(self):
        return self._src.budget


def _bounded(dist):
    def A(pair, rng, budget):
        task, x = pair
        return dist.guess(x, OracleFreeSource(SampleSource(task, rng, budget)), rng)

    return A


def measure_p(learner, task_factory, eps: float, trials: int, seed: int = 0, budget: Budget | None = None) -> tuple[float, int]:
    """P[err(f) <= eps] for the learner's hypothesis."""
    ok = 0
    for t in range(trials):
        r = rng_stream(seed, "efid-p", t)
        task = task_factory(int(r.integers(0, 2**62)))
        try:
            f = learner.learn(SampleSource(task, r, (budget or Budget()).fresh()))
        except BudgetExceeded:
            continue
        ok += task.risk(f) <= eps
    return ok / trials, trials


def measure_c(pair: EfidPair, learner, trials: int, seed: int = 0, budget: Budget | None = None) -> tuple[float, int]:
    """P[err(x, learner(x)) > 2 eps] on attack queries."""
    hits = 0
    for t in range(trials):
        task, x = pair.d1(rng_stream(seed, "efid-c", t, "draw"))
        hits += efid_distinguish(learner, pair.eps, x, task, rng_stream(seed, "efid-c", t, "learn"), budget)
    return hits / trials, trials


def verify_efid(pair: EfidPair, learner, trials: int, seed: int = 0, suite: Sequence = (),
                calib_trials: int | None = None, learner_budget: Budget | None = None) -> dict:
    """Calibrate p and c, then estimate the TV lower bound and the bounded
    suite's advantages."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n_cal = calib_trials or trials
    p, _ = measure_p(learner, pair.task_factory, pair.eps, n_cal, seed, learner_budget)
    c, _ = measure_c(pair, learner, n_cal, seed, learner_budget)
    pair.p, pair.c = p, c

    def A(x_pair, rng, budget):
        task, x = x_pair
        return efid_distinguish(learner, pair.eps, x, task, rng, learner_budget)

    full = {"oracle-learner": A}
    for d in suite:
        full[d.name] = _bounded(d)
    est = run_indistinguishability_suite(pair.d0, pair.d1, full, trials, seed=int(rng_stream(seed, "efid-game").integers(0, 2**62)), budget=pair.T_prime)
    main = est.pop("oracle-learner")
    win = main.wins / trials
    tv = 2.0 * max(0.0, main.advantage)
    lo, hi = wilson_interval(main.wins, trials)
    return {
        "tv_lower_estimate": tv,
        "tv_stderr": 2.0 * std_error(win, trials),
        "tv_interval": [max(0.0, 2 * lo - 1), max(0.0, 2 * hi - 1)],
        "eta_target": pair.eta,
        "p_hat": p,
        "c_hat": c,
        "calibration_trials": n_cal,
        "trials": trials,
        "indistinguishability_advantages": {k: v.to_dict() for k, v in sorted(est.items())},
    }


def efid_holds(report: dict, z: float = 3.0) -> bool:
    """TV estimate within z standard errors of the target or above it."""
    return report["tv_lower_estimate"] >= report["eta_target"] - z * report["tv_stderr"]


def mixture_pair(pair: EfidPair, lam: float) -> EfidPair:
    """D1 replaced by (1 - lam) D1 + lam D0; lam = 1 collapses the pair."""
    def d1(rng):
        return pair.d0(rng) if rng.random() < lam else pair.d1(rng)

    return EfidPair(pair.d0, d1, pair.eps, pair.q, pair.T, pair.T_prime, pair.delta, None, None, pair.task_factory)
