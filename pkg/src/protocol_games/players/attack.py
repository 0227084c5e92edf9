"""Transferable attack on the encrypted circle task."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Budget, SampleSource
from ..tasks import N_BITS, ONE, ArcBand, CryptoBatch, band_sampler
from .learners import erm_halfplane


class AttackError(RuntimeError):
    pass


@dataclass
class AttackOutput:
    queries: object
    trace: dict = field(default_factory=dict)  # harness-only diagnostics

    def __len__(self):
        return len(self.queries)


def attack_sizes(eps: float) -> tuple[int, int]:
    """(N, q) = (900/eps, 16/eps), rounded up."""
    return math.ceil(900 / eps - 1e-9), math.ceil(16 / eps - 1e-9)


class TransferableAttacker:
    """Learn w' from the clear samples, then hide band points under encryption.

    Positions in a uniformly random subset S receive fresh uniform clear
    angles; every other position receives an encryption of a point drawn
    uniformly from the band of half-width 1.01 * eps around the boundary of
    the learned halfplane.  A defender who cannot locate the boundary to
    within the band width mislabels a constant fraction of those points.
    """

    name = "encrypted-band"

    def __init__(self, eps: float, N: int | None = None, q: int | None = None, band_factor: float = 1.01):
        n0, q0 = attack_sizes(eps)
        self.eps = eps
        self.N = n0 if N is None else int(N)
        self.q = q0 if q is None else int(q)
        self.band_factor = band_factor

    def attack(self, source: SampleSource, rng: np.random.Generator, clear_mask=None) -> AttackOutput:
        backend, pk = source.public
        x, y = source.draw(self.N)
        keep = x.flags == 0
        if int(keep.sum()) < 2:
            raise AttackError("fewer than two clear samples")
        h = erm_halfplane(x.clear[keep], y.clear[keep])
        if clear_mask is None:
            clear_mask = rng.integers(0, 2, self.q).astype(bool)
        else:
            clear_mask = np.asarray(clear_mask, dtype=bool)
            if len(clear_mask) != self.q:
                raise ValueError("clear mask must have length q")
        enc_idx = np.flatnonzero(~clear_mask)
        clear_vals = np.where(clear_mask, rng.integers(0, ONE, self.q, dtype=np.int64), 0)
        band = ArcBand.from_turns(h.w, self.band_factor * self.eps)
        pts = band_sampler(band)(rng, len(enc_idx))
        cts: list = [None] * self.q
        for i, ct in zip(enc_idx, backend.encrypt_many(pk, pts, N_BITS, source.budget)):
            cts[i] = ct
        queries = CryptoBatch((~clear_mask).astype(np.int8), clear_vals, cts, pk)
        trace = {"planted": enc_idx, "w_prime": h.w, "band_points": pts}
        return AttackOutput(queries, trace)


def transferable_attack(task, eps: float, lam: int | None = None, budget: Budget | None = None, rng=None, clear_mask=None) -> AttackOutput:
    """Run the attack against ``task`` with a fresh sample source."""
    if rng is None:
        rng = np.random.default_rng()
    if lam is not None and getattr(task, "lam", lam) != lam:
        raise ValueError("task security parameter does not match")
    src = SampleSource(task, rng, budget)
    return TransferableAttacker(eps).attack(src, rng, clear_mask)


class HonestQuerySampler:
    """Degenerate attack: plain draws from the task distribution."""

    name = "honest"

    def __init__(self, q: int):
        self.q = q

    def attack(self, source: SampleSource, rng, clear_mask=None) -> AttackOutput:
        return AttackOutput(source.draw_inputs(self.q), {"planted": np.array([], dtype=np.int64)})
