"""Chernoff bounds, advantage estimation and TV lower bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import norm

from .core import Budget, BudgetExceeded, rng_stream

Z95 = float(norm.ppf(0.975))


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    p = successes / n
    z2 = z * z
    denom = 1 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


def std_error(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def _check_count(k):
    if k < 1:
        raise ValueError("k must be at least 1")


def chernoff_two_sided(eps: float, k: int) -> float:
    """2 exp(-eps^2 k / 2)."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    _check_count(k)
    return 2.0 * math.exp(-eps * eps * k / 2.0)


def chernoff_lower(eps: float, k: int, p: float) -> float:
    """Bound on P[mean <= (1 - eps) p]."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    _check_count(k)
    return math.exp(-eps * eps * k * p / 2.0)


def chernoff_upper(delta: float, k: int, p: float) -> float:
    """Bound on P[mean > (1 + delta) p]."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    _check_count(k)
    return math.exp(-delta * delta * k * p / (2.0 + delta))


@dataclass(frozen=True)
class AdvantageEstimate:
    advantage: float
    interval: tuple[float, float]
    trials: int
    wins: int = 0

    @property
    def stderr(self) -> float:
        return std_error(self.wins / self.trials, self.trials)

    def to_dict(self) -> dict:
        return {"advantage": self.advantage, "interval": list(self.interval), "trials": self.trials}


def _estimate(wins: int, trials: int) -> AdvantageEstimate:
    lo, hi = wilson_interval(wins, trials)
    return AdvantageEstimate(wins / trials - 0.5, (lo - 0.5, hi - 0.5), trials, wins)


Sampler = Callable[[np.random.Generator], object]
Distinguisher = Callable[..., int]


def _guess(A: Distinguisher, x, rng, budget: Budget | None) -> int | None:
    b = budget.fresh() if budget is not None else Budget()
    try:
        return int(A(x, rng, b))
    except BudgetExceeded:
        return None


def run_indistinguishability_suite(
    d0: Sampler,
    d1: Sampler,
    suite: Mapping[str, Distinguisher],
    trials: int,
    seed: int = 0,
    budget: Budget | None = None,
) -> dict[str, AdvantageEstimate]:
    """Play the guessing game once per trial and let every distinguisher guess.

    Sharing the challenge across the suite keeps the cost of drawing from an
    expensive sampler independent of the suite size.  A distinguisher that
    runs out of budget loses that trial.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not suite:
        raise ValueError("empty distinguisher suite")
    wins = dict.fromkeys(suite, 0)
    for t in range(trials):
        rng = rng_stream(seed, "indist", t)
        b = int(rng.integers(0, 2))
        x = (d1 if b else d0)(rng_stream(seed, "indist", t, "draw"))
        for i, (name, A) in enumerate(suite.items()):
            g = _guess(A, x, rng_stream(seed, "indist", t, "guess", name), budget)
            if g is not None and g == b:
                wins[name] += 1
    return {name: _estimate(w, trials) for name, w in wins.items()}


def run_indistinguishability_game(
    d0: Sampler,
    d1: Sampler,
    A: Distinguisher,
    trials: int,
    seed: int = 0,
    budget: Budget | None = None,
) -> AdvantageEstimate:
    """Estimate the advantage of ``A(x, rng, budget) -> bit`` at telling d1 from d0."""
    return run_indistinguishability_suite(d0, d1, {"A": A}, trials, seed, budget)["A"]


def tv_lower_bound(d0: Sampler, d1: Sampler, distinguisher: Distinguisher, trials: int, seed: int = 0) -> float:
    est = run_indistinguishability_game(d0, d1, distinguisher, trials, seed)
    return 2.0 * max(0.0, est.advantage)
