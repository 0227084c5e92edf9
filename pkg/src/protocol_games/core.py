"""Shared domain types: budgets, tasks, classifiers, transcripts and error functionals."""
from __future__ import annotations

import copy
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

REJECT = 0  # reject token inside int8 label arrays; clear labels are +1/-1


class BudgetExceeded(RuntimeError):
    """A player tried to use more samples or operations than allowed."""


class ConfigError(ValueError):
    """Inconsistent protocol or experiment parameters."""


# ---------------------------------------------------------------------------
# RNG streams


def _key_to_int(key: Any) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode())


def rng_stream(seed: int, *keys: Any) -> np.random.Generator:
    """Counter-based generator for (seed, key path).

    Streams for different key paths are independent, and the same path always
    yields the same stream, so trials can run in any order or in parallel.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def trial_seed(seed: int, trial: int) -> int:
    """A 63-bit integer identifying one trial; recorded in transcripts."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# Budgets


@dataclass
class Budget:
    """Sample and operation limits; ``None`` means unlimited."""

    max_samples: int | None = None
    max_ops: int | None = None
    used_samples: int = 0
    used_ops: int = 0

    def __post_init__(self):
        for name in ("max_samples", "max_ops"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.used_samples < 0 or self.used_ops < 0:
            raise ConfigError("usage counters must be non-negative")

    def charge(self, samples: int = 0, ops: int = 0) -> "Budget":
        samples, ops = int(samples), int(ops)
        if samples < 0 or ops < 0:
            raise ValueError("charges must be non-negative")
        new_s = self.used_samples + samples
        new_o = self.used_ops + ops
        if self.max_samples is not None and new_s > self.max_samples:
            raise BudgetExceeded(f"sample budget {self.max_samples} exceeded ({new_s})")
        if self.max_ops is not None and new_o > self.max_ops:
            raise BudgetExceeded(f"operation budget {self.max_ops} exceeded ({new_o})")
        self.used_samples = new_s
        self.used_ops = new_o
        return self

    def fresh(self) -> "Budget":
        """Same limits, zero usage."""
        return Budget(self.max_samples, self.max_ops)

    def scaled(self, factor: float) -> "Budget":
        def s(v):
            return None if v is None else int(round(v * factor))

        return Budget(s(self.max_samples), s(self.max_ops))

    @property
    def remaining_samples(self) -> float:
        return float("inf") if self.max_samples is None else self.max_samples - self.used_samples

    def to_dict(self) -> dict:
        return {"max_samples": self.max_samples, "max_ops": self.max_ops}

    @classmethod
    def from_dict(cls, d: dict | None) -> "Budget":
        d = d or {}
        return cls(d.get("max_samples"), d.get("max_ops"))


def charge(budget: Budget | None, samples: int = 0, ops: int = 0) -> Budget | None:
    if budget is None:
        return None
    return budget.charge(samples, ops)


UNLIMITED = Budget()


# ---------------------------------------------------------------------------
# Protocol parameters


@dataclass(frozen=True)
class ProtocolParams:
    epsilon: float
    q: int
    attacker_budget: Budget = field(default_factory=Budget)
    defender_budget: Budget = field(default_factory=Budget)
    l: float = 0.9
    c: float = 0.9
    s: float = 0.1
    # error thresholds used by the different properties, in units of epsilon
    transfer_factor: float = 2.0
    soundness_factor: float = 7.0
    hamming_factor: float = 3.0

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ConfigError("epsilon must lie in (0, 1/2)")
        if self.q < 0:
            raise ConfigError("q must be non-negative")
        for name in ("l", "c", "s"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must be a probability")
        if self.s >= self.c:
            raise ConfigError("s must be strictly smaller than c")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "q": self.q,
            "attacker_budget": self.attacker_budget.to_dict(),
            "defender_budget": self.defender_budget.to_dict(),
            "l": self.l,
            "c": self.c,
            "s": self.s,
            "transfer_factor": self.transfer_factor,
            "soundness_factor": self.soundness_factor,
            "hamming_factor": self.hamming_factor,
        }


# ---------------------------------------------------------------------------
# Tasks and classifiers


class LearningTask:
    """Distribution plus ground truth, seen by players only through samples.

    Subclasses implement ``sample``, ``sample_inputs`` and ``errors``.  The
    error oracle lives with the harness; players never call it.
    """

    name = "task"

    def sample(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def sample_inputs(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def errors(self, queries, answers) -> np.ndarray:
        """Per-position oracle values: 1.0 wrong, 0.0 right, nan undefined."""
        raise NotImplementedError

    def error_oracle(self, x, y):
        v = float(self.errors(self._singleton(x), self._singleton_answer(y))[0])
        return None if np.isnan(v) else int(v)

    def _singleton(self, x):
        return np.array([x])

    def _singleton_answer(self, y):
        return np.array([y], dtype=np.int8)

    def empirical_error(self, queries, answers) -> float:
        e = self.errors(queries, answers)
        if len(e) == 0:
            raise ValueError("empty query sequence")
        return float(np.nansum(e) / len(e))

    def risk(self, f: "Classifier") -> float:
        """Exact err(f) when the family supports it."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"family": self.name}


class Classifier:
    """Total label map. ``cost`` operations are charged per prediction."""

    cost: int = 1

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError

    def classify(self, x, budget: Budget | None = None):
        charge(budget, ops=self.cost * len(x))
        return self.predict(x)

    def __call__(self, x):
        return self.predict(x)


class SelectiveClassifier(Classifier):
    """Wraps a base classifier and a list of rejector hypotheses.

    A point is rejected when any rejector disagrees with the base there.
    Elsewhere the output equals the base output, so no relabeling happens.
    """

    def __init__(self, base: Classifier, rejectors: Sequence[Classifier] = ()):
        self.base = base
        self.rejectors = list(rejectors)
        self.cost = base.cost + sum(r.cost for r in self.rejectors)

    def predict(self, x) -> np.ndarray:
        base = np.asarray(self.base.predict(x), dtype=np.int8)
        y = base.copy()
        for r in self.rejectors:
            y[np.asarray(r.predict(x)) != base] = REJECT
        return y


class SampleSource:
    """A player's only access to the task: budgeted i.i.d. labeled samples."""

    def __init__(self, task: LearningTask, rng: np.random.Generator, budget: Budget | None = None):
        self.task = task
        self.rng = rng
        self.budget = budget if budget is not None else Budget()

    def draw(self, n: int):
        self.budget.charge(samples=n)
        return self.task.sample(n, self.rng)

    def draw_inputs(self, n: int):
        """Unlabeled draws; same price as labeled ones."""
        self.budget.charge(samples=n)
        return self.task.sample_inputs(n, self.rng)

    def draw_summary(self, n: int):
        """Labeled sample in summary form (d-ones task), charged as n draws."""
        self.budget.charge(samples=n)
        return self.task.sample_summary(n, self.rng)

    @property
    def public(self):
        return getattr(self.task, "public", None)


# ---------------------------------------------------------------------------
# Transcripts and error functionals


@dataclass
class Transcript:
    queries: Any
    answers: Any
    detection_bit: int | None
    errors: float
    seed: int

    def __post_init__(self):
        if len(self.queries) != len(self.answers):
            raise ValueError("queries and answers differ in length")
        if not 0.0 <= self.errors <= 1.0:
            raise ValueError("errors must lie in [0, 1]")


def empirical_error(queries: Sequence, answers: Sequence, oracle: Callable) -> float:
    """Fraction of positions where ``oracle`` reports an error (undefined counts 0)."""
    if len(queries) != len(answers):
        raise ValueError("queries and answers differ in length")
    if len(queries) == 0:
        raise ValueError("empty query sequence")
    wrong = 0
    for x, y in zip(queries, answers):
        if oracle(x, y) == 1:
            wrong += 1
    return wrong / len(queries)


def rejection_rate(answers: Sequence) -> float:
    if len(answers) == 0:
        raise ValueError("empty answer sequence")
    arr = np.asarray(answers, dtype=object) if not isinstance(answers, np.ndarray) else answers
    if arr.dtype == object:
        return sum(1 for a in answers if a is None or (isinstance(a, (int, np.integer)) and a == REJECT)) / len(answers)
    return float(np.mean(arr == REJECT))


def estimate_risk(
    f: Classifier,
    task: LearningTask,
    trials: int,
    rng: np.random.Generator,
    budget: Budget | None = None,
) -> tuple[float, tuple[float, float]]:
    """Monte-Carlo err(f) with a Wilson 95% interval."""
    from .stats import wilson_interval

    if trials < 1:
        raise ValueError("trials must be at least 1")
    charge(budget, samples=trials)
    x = task.sample_inputs(trials, rng)
    y = f.predict(x)
    e = task.errors(x, y)
    k = int(np.nansum(e))
    return k / trials, wilson_interval(k, trials)


def clone_budget(b: Budget | None) -> Budget:
    return Budget() if b is None else copy.copy(b).fresh()
