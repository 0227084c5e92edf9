"""Rejectron-based adversarial defense and the attackers it is tested against."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Classifier, SampleSource, rejection_rate
from ..tasks import ArcBand, CircleTask, band_sampler, disagreement_segments, sample_segments
from .learners import erm_halfplane
from .rejectron import rejectron, rejectron_eps_star


def default_defense_samples(eps: float, vc_dim: int = 2) -> int:
    """d ln^2(d) / eps^3 (natural log)."""
    return max(1, math.ceil(vc_dim * math.log(vc_dim) ** 2 / eps**3))


@dataclass
class DefenseSession:
    f: Classifier
    train_x: np.ndarray
    train_y: np.ndarray


class RejectronDefense:
    """Learns f from n samples, then flags query sets that Rejectron rejects
    at a rate above ``threshold_factor * eps``."""

    name = "rejectron"

    def __init__(self, eps: float, n_train: int | None = None, eps_star: float | None = None, vc_dim: int = 2, threshold_factor: float = 2 / 3):
        if not 0 < eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        self.eps = eps
        self.n_train = default_defense_samples(eps, vc_dim) if n_train is None else int(n_train)
        self.eps_star = rejectron_eps_star(self.n_train, eps, vc_dim) if eps_star is None else eps_star
        self.threshold = threshold_factor * eps

    def publish(self, source: SampleSource, rng) -> DefenseSession:
        x, y = source.draw(self.n_train)
        return DefenseSession(erm_halfplane(x, y), x, y)

    def detect(self, session: DefenseSession, x, rng=None) -> tuple[int, dict]:
        sel = rejectron((session.train_x, session.train_y), x, self.eps_star, f=session.f)
        rate = rejection_rate(sel.predict(x))
        return int(rate > self.threshold), {"rejection_rate": rate, "rounds": len(sel.rejectors)}


class ConstantDetector:
    """Publishes an ERM and always answers ``bit``; a sanity baseline."""

    def __init__(self, bit: int, n_train: int):
        self.bit, self.n_train = int(bit), n_train
        self.name = f"always-{self.bit}"

    def publish(self, source, rng) -> DefenseSession:
        x, y = source.draw(self.n_train)
        return DefenseSession(erm_halfplane(x, y), x, y)

    def detect(self, session, x, rng=None):
        return self.bit, {}


def defense_vc(task: CircleTask, eps: float, attacker, rng, n_train: int | None = None, q: int | None = None, budget=None):
    """One round of the defense: returns (f, x, b)."""
    d = RejectronDefense(eps, n_train)
    session = d.publish(SampleSource(task, rng, budget), rng)
    x = attacker.attack(session.f, SampleSource(task, rng), rng, {"truth": task.h, "train_x": session.train_x})
    b, _ = d.detect(session, x, rng)
    return session.f, x, b


def defense_nash_wrapper(f: Classifier, x, inner, eps: float, hamming_factor: float = 3.0) -> int:
    """b' = 1 iff the inner strategy says b = 1 or its answers move far from f(x)."""
    y, b = inner(f, x)
    fx = np.asarray(f.predict(x))
    y = np.asarray(y)
    if len(y) != len(fx):
        raise ValueError("answers and queries differ in length")
    return int(b == 1 or int(np.sum(fx != y)) > hamming_factor * eps * len(fx))


# ---------------------------------------------------------------------------
# Attackers.  ``view`` carries harness-granted extras named in ``privileges``.


class HonestAttacker:
    name = "honest"
    privileges: tuple = ()

    def __init__(self, q: int):
        self.q = q

    def attack(self, f, source, rng, view=None):
        return source.draw_inputs(self.q)


class OracleFloodAttacker:
    """Knows the ground truth (an unbounded attacker stand-in) and spends a
    fraction ``rho`` of its queries uniformly on the region where f errs."""

    privileges = ("truth",)

    def __init__(self, q: int, rho: float = 1.0):
        self.q, self.rho = q, rho
        self.name = "oracle-flood" if rho == 1.0 else f"oracle-flood-{rho:g}"

    def attack(self, f, source, rng, view=None):
        segs = disagreement_segments(f, view["truth"])
        k = int(round(self.rho * self.q)) if segs else 0
        honest = source.draw_inputs(self.q - k)
        if k == 0:
            return honest
        x = np.concatenate([sample_segments(segs, rng, k), honest])
        return x[rng.permutation(len(x))]


class LearnedFloodAttacker:
    """Learns its own halfplane from ``n`` samples and floods the region where
    it disagrees with f, betting that its estimate is the better one."""

    privileges: tuple = ()

    def __init__(self, q: int, n: int):
        self.q, self.n = q, n
        self.name = f"learned-flood-{n}"

    def attack(self, f, source, rng, view=None):
        x, y = source.draw(self.n)
        g = erm_halfplane(x, y)
        segs = disagreement_segments(f, g)
        if not segs:
            return source.draw_inputs(self.q)
        return sample_segments(segs, rng, self.q)


class BoundaryBandAttacker:
    """Concentrates all queries in a thin band around f's own boundary."""

    privileges: tuple = ()

    def __init__(self, q: int, width: float):
        self.q, self.width = q, width
        self.name = f"boundary-band-{width:g}"

    def attack(self, f, source, rng, view=None):
        return band_sampler(ArcBand.from_turns(f.w, self.width))(rng, self.q)


class ReplayAttacker:
    """Replays the defender's own training inputs (test-only privilege)."""

    name = "replay"
    privileges = ("train_x",)

    def __init__(self, q: int):
        self.q = q

    def attack(self, f, source, rng, view=None):
        tx = view["train_x"]
        return tx[rng.integers(0, len(tx), self.q)] if self.q > len(tx) else tx[: self.q].copy()
