"""Baseline adversaries, defenders and distinguishers, plus the name registry."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import SampleSource
from ..tasks import ArcBand, CryptoBatch, QUARTER
from .defense import BoundaryBandAttacker, HonestAttacker, LearnedFloodAttacker, OracleFloodAttacker, ReplayAttacker
from .learners import CryptoHalfplaneAnswerer, ERMHalfplaneLearner, erm_dones, smooth_classifier

# ---------------------------------------------------------------------------
# Watermark removers: answer(f, x, source, rng) -> labels


class EchoRemover:
    name = "echo"

    def answer(self, f, x, source, rng):
        return f.classify(x, source.budget)


class FlipRemover:
    def __init__(self, rho: float):
        self.rho = rho
        self.name = f"flip-{rho:g}"

    def answer(self, f, x, source, rng):
        y = np.asarray(f.classify(x, source.budget)).copy()
        flip = rng.random(len(y)) < self.rho
        y[flip] = -y[flip]
        return y


class FreshLearnerRemover:
    """Ignores f and answers with its own consistent learner."""

    def __init__(self, n: int):
        self.n = int(n)
        self.name = f"fresh-learner-{self.n}"

    def answer(self, f, x, source, rng):
        if hasattr(source.task, "sample_summary"):
            g = erm_dones(source.draw_summary(self.n), rng)
        else:
            g = ERMHalfplaneLearner(self.n).fit(source)
        return g.classify(x, source.budget)


class ConstantRemover:
    def __init__(self, label: int = 1):
        self.label = int(label)
        self.name = "all-positive" if label == 1 else "all-negative"

    def answer(self, f, x, source, rng):
        return np.full(len(x), self.label, dtype=np.int8)


class SmoothingRemover:
    """Circle tasks: answer with the smoothed version of f."""

    def __init__(self, eta: float, m: int = 257):
        self.eta, self.m = eta, m
        self.name = f"smoothing-{eta:g}"

    def answer(self, f, x, source, rng):
        return smooth_classifier(f, self.eta, self.m).classify(x, source.budget)


# ---------------------------------------------------------------------------
# Watermark distinguishers: guess(f, x, source, rng) -> 1 if x looks planted


class RepeatDistinguisher:
    name = "repeat-free"

    def guess(self, f, x, source, rng):
        return int(len(np.unique(x)) == len(x))


class FPositiveDistinguisher:
    name = "f-negative-on-all"

    def guess(self, f, x, source, rng):
        return int(np.all(f.classify(x, source.budget) == -1))


class SampleOverlapDistinguisher:
    """Flags x when a fresh sample shows a query labeled +1 that f calls -1."""

    def __init__(self, n: int):
        self.n = int(n)
        self.name = f"sample-overlap-{self.n}"

    def guess(self, f, x, source, rng):
        s = source.draw_summary(self.n)
        hit = np.isin(np.asarray(x, dtype=np.int64), s.pos_unique)
        return int(np.any(hit & (f.predict(x) == -1)))


class FreshDisagreementDistinguisher:
    def __init__(self, n: int):
        self.n = int(n)
        self.name = f"fresh-disagreement-{self.n}"

    def guess(self, f, x, source, rng):
        g = erm_dones(source.draw_summary(self.n), rng)
        return int(np.any(g.predict(x) != f.predict(x)))


# ---------------------------------------------------------------------------
# Transferable-attack defenders: answer(x, source, rng) -> CryptoBatch of labels


class ERMDefender:
    """Midpoint ERM from the clear part of n samples; encrypted queries are
    answered homomorphically."""

    def __init__(self, n: int):
        self.n = int(n)
        self.name = f"erm-{self.n}"

    def learn(self, source: SampleSource):
        return ERMHalfplaneLearner(self.n).fit(source)

    def answer(self, x: CryptoBatch, source: SampleSource, rng, h=None):
        backend, pk = source.public
        if h is None:
            h = self.learn(source)
        return CryptoHalfplaneAnswerer(h, backend, pk).answer(x, source.budget)


class RandomLabelDefender:
    name = "random-labels"

    def answer(self, x: CryptoBatch, source: SampleSource, rng):
        backend, pk = source.public
        y = rng.choice(np.array([-1, 1]), len(x))
        enc = np.flatnonzero(x.flags)
        cts: list = [None] * len(x)
        for i, ct in zip(enc, backend.encrypt_many(pk, (y[enc] == 1).astype(np.int64), 1, source.budget)):
            cts[i] = ct
        return CryptoBatch(x.flags.copy(), np.where(x.flags == 1, 0, y), cts, pk)


class ConstantDefender:
    def __init__(self, label: int = 1):
        self.label = int(label)
        self.name = "constant-positive" if label == 1 else "constant-negative"

    def answer(self, x: CryptoBatch, source: SampleSource, rng):
        backend, pk = source.public
        enc = np.flatnonzero(x.flags)
        bit = 1 if self.label == 1 else 0
        cts: list = [None] * len(x)
        for i, ct in zip(enc, backend.encrypt_many(pk, [bit] * len(enc), 1, source.budget)):
            cts[i] = ct
        return CryptoBatch(x.flags.copy(), np.where(x.flags == 1, 0, self.label), cts, pk)


# ---------------------------------------------------------------------------
# Transferable-attack distinguishers: guess(x, source, rng) -> 1 if x looks attacked


class FlagCountDistinguisher:
    name = "flag-count"

    def guess(self, x: CryptoBatch, source, rng):
        return int(2 * int(np.sum(x.flags)) > len(x))


class ClearHalfDistinguisher:
    name = "clear-half-circle"

    def guess(self, x: CryptoBatch, source, rng):
        c = x.clear[x.flags == 0]
        if len(c) == 0:
            return 0
        return int(np.mean(c < (2 * QUARTER)) > 0.5)


class HandleByteDistinguisher:
    name = "handle-byte-parity"

    def guess(self, x: CryptoBatch, source, rng):
        acc = 0
        for ct in x.cts:
            if ct is not None:
                acc ^= ct.handle[0]
        return acc & 1


class ClearBandDistinguisher:
    """Learns a halfplane from n samples and checks whether clear queries
    crowd its boundary more than uniform points would."""

    def __init__(self, n: int, width: float):
        self.n, self.width = int(n), width
        self.name = f"clear-band-{self.n}"

    def guess(self, x: CryptoBatch, source, rng):
        h = ERMHalfplaneLearner(self.n).fit(source)
        c = x.clear[x.flags == 0]
        if len(c) == 0:
            return 0
        frac = float(np.mean(ArcBand.from_turns(h.w, self.width).contains(c)))
        return int(frac > 4 * self.width)


# ---------------------------------------------------------------------------
# Registry

REGISTRY: dict[str, Callable] = {
    # watermark removers
    "echo": lambda ctx, **kw: EchoRemover(),
    "flip": lambda ctx, rho=0.5, **kw: FlipRemover(rho),
    "fresh-learner": lambda ctx, n=None, **kw: FreshLearnerRemover(n or ctx["attacker_samples"]),
    "all-positive": lambda ctx, **kw: ConstantRemover(1),
    "smoothing": lambda ctx, eta=0.05, m=257, **kw: SmoothingRemover(eta, m),
    # watermark distinguishers
    "repeat-free": lambda ctx, **kw: RepeatDistinguisher(),
    "f-negative-on-all": lambda ctx, **kw: FPositiveDistinguisher(),
    "sample-overlap": lambda ctx, n=None, **kw: SampleOverlapDistinguisher(n or ctx["attacker_samples"]),
    "fresh-disagreement": lambda ctx, n=None, **kw: FreshDisagreementDistinguisher(n or ctx["attacker_samples"]),
    # transferable-attack defenders
    "erm": lambda ctx, n=None, **kw: ERMDefender(n if n is not None else ctx["defender_samples"]),
    "random-labels": lambda ctx, **kw: RandomLabelDefender(),
    "constant-positive": lambda ctx, **kw: ConstantDefender(1),
    # transferable-attack distinguishers
    "flag-count": lambda ctx, **kw: FlagCountDistinguisher(),
    "clear-half-circle": lambda ctx, **kw: ClearHalfDistinguisher(),
    "handle-byte-parity": lambda ctx, **kw: HandleByteDistinguisher(),
    "clear-band": lambda ctx, n=None, width=None, **kw: ClearBandDistinguisher(n or ctx["attacker_samples"], width or 1.01 * ctx["epsilon"]),
    # defense attackers
    "honest": lambda ctx, **kw: HonestAttacker(ctx["q"]),
    "oracle-flood": lambda ctx, rho=1.0, **kw: OracleFloodAttacker(ctx["q"], rho),
    "learned-flood": lambda ctx, n=None, **kw: LearnedFloodAttacker(ctx["q"], n or ctx["attacker_samples"]),
    "boundary-band": lambda ctx, width=None, **kw: BoundaryBandAttacker(ctx["q"], width or ctx["epsilon"]),
    "replay": lambda ctx, **kw: ReplayAttacker(ctx["q"]),
}


def make_strategy(spec, ctx: dict):
    """Build a strategy from a registry name or {"name": ..., **params}."""
    if isinstance(spec, str):
        name, params = spec, {}
    else:
        params = dict(spec)
        name = params.pop("name")
    if name not in REGISTRY:
        raise KeyError(f"unknown strategy {name!r}")
    return REGISTRY[name](ctx, **params)


def register(name: str):
    def deco(factory):
        REGISTRY[name] = factory
        return factory

    return deco


def baseline_suite(family: str = "dones", t: int = 1000, eps: float = 0.1) -> list:
    """Default adversaries for a task family under sample budget t."""
    if family == "dones":
        return [EchoRemover(), FlipRemover(0.5), FlipRemover(1.0), FreshLearnerRemover(t), ConstantRemover(1), SampleOverlapDistinguisher(t)]
    if family == "circle":
        return [EchoRemover(), FlipRemover(0.5), FlipRemover(1.0), FreshLearnerRemover(t), SmoothingRemover(eps / 2)]
    raise ValueError(f"no baseline suite for family {family!r}")
