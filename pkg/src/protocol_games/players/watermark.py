"""Watermark for the exactly-d-ones class: plant q seen positives as negatives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import SampleSource
from ..tasks import DOnesHypothesis
from .learners import erm_dones


class WatermarkFailure(RuntimeError):
    """Too few positives were seen to plant q of them."""


@dataclass
class WatermarkOutput:
    f: DOnesHypothesis
    queries: np.ndarray
    is_planted: int  # harness-only
    info: dict = field(default_factory=dict)


def default_builder_samples(d: int, q: int) -> int:
    """Enough draws to expect 2q distinct positives when N = 100 d^2."""
    return max(1, 200 * d * max(q, 1))


class WatermarkBuilder:
    """Learn positives A and negatives B, move a random q-subset A_w of A to
    the negative side, fit an exactly-d-ones f to the moved labels, and
    publish x = A_w or a fresh D^q draw with probability 1/2 each."""

    name = "dones-watermark"

    def __init__(self, eps: float, q: int, n_samples: int | None = None):
        self.eps, self.q = eps, int(q)
        self.n_samples = n_samples

    def build(self, source: SampleSource, rng: np.random.Generator, planted: int | None = None) -> WatermarkOutput:
        task = source.task
        n = self.n_samples or default_builder_samples(task.d, self.q)
        summary = source.draw_summary(n)
        A = summary.pos_unique
        if len(A) < self.q:
            raise WatermarkFailure(f"only {len(A)} positives seen, need {self.q}")
        A_w = rng.choice(A, self.q, replace=False) if self.q else np.array([], dtype=np.int64)
        # f: A' = A \ A_w positive, padded to d with indices outside A' u B'
        keep = summary.pos_unique[~np.isin(summary.pos_unique, A_w)]
        moved = _Moved(summary, keep)
        f = erm_dones(moved, rng, avoid_extra=A_w)
        if planted is None:
            planted = int(rng.integers(0, 2))
        if planted and self.q:
            x = rng.permutation(A_w).astype(np.int64)
        else:
            x = source.draw_inputs(self.q)
            planted = 0
        return WatermarkOutput(f, x, int(planted), {"n_positives": int(len(A)), "A_w": np.sort(A_w)})


class _Moved:
    """Sample summary view with a reduced positive set (the planted points
    count as seen, hence never used for padding)."""

    def __init__(self, summary, positives):
        self._s = summary
        self.pos_unique = np.asarray(positives, dtype=np.int64)
        self.d, self.N = summary.d, summary.N

    def avoid_mask(self, idx):
        return self._s.avoid_mask(idx)


def watermark_build(task, eps: float, q: int, rng, n_samples: int | None = None, budget=None) -> WatermarkOutput:
    return WatermarkBuilder(eps, q, n_samples).build(SampleSource(task, rng, budget), rng)


class UniquenessProver:
    """Independent consistent learner answering the queries with its own f'."""

    name = "dones-erm-prover"

    def __init__(self, n_samples: int):
        self.n_samples = int(n_samples)

    def answer(self, x, source: SampleSource, rng) -> np.ndarray:
        f2 = erm_dones(source.draw_summary(self.n_samples), rng)
        return f2.predict(x)


def uniqueness_prover(task, eps: float, x, rng, n_samples: int, budget=None) -> np.ndarray:
    return UniquenessProver(n_samples).answer(x, SampleSource(task, rng, budget), rng)


def watermark_verify_theft(y, y_prime, threshold: float = 0.5) -> int:
    y, y_prime = np.asarray(y), np.asarray(y_prime)
    if len(y) != len(y_prime):
        raise ValueError("answer sequences differ in length")
    if len(y) == 0:
        return 0
    return int(np.mean(y != y_prime) > threshold)
