"""Consistent learners for both task families, smoothing and boosting."""
from __future__ import annotations

import math

import numpy as np

from ..core import Budget, Classifier, SampleSource, charge
from ..fhe import halfplane_circuit
from ..tasks import (
    HALF,
    MASK,
    ONE,
    QUARTER,
    N_BITS,
    CryptoBatch,
    DOnesHypothesis,
    HalfplaneHypothesis,
    SampleSummary,
    halfplane_labels,
)

_MASK64 = np.int64(MASK)


class InconsistentSamples(ValueError):
    pass


# ---------------------------------------------------------------------------
# Halfplanes


def version_space(x, y) -> tuple[int, int] | None:
    """Open interval (lo, hi) of admissible b = w + 1/4, unwrapped so lo < hi.

    Returns None for an empty sample.  Raises when no halfplane fits.
    A +1 label at angle t forces b into (t, t + 1/2); a -1 label forces b
    into [t + 1/2, t + 1], so each sample contributes the arc starting at
    a = t (resp. t + 1/2) of length 1/2.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if len(x) == 0:
        return None
    a = np.sort(np.where(y == 1, x, x + np.int64(HALF)) & _MASK64)
    gaps = np.empty(len(a), dtype=np.int64)
    gaps[:-1] = np.diff(a)
    gaps[-1] = a[0] + np.int64(ONE) - a[-1]
    j = int(np.argmax(gaps))
    if int(gaps[j]) <= HALF:
        raise InconsistentSamples("no halfplane is consistent with the samples")
    first = int(a[(j + 1) % len(a)])
    last = int(a[j])
    if last < first:
        last += ONE
    return last, first + HALF


def erm_halfplane(x, y) -> HalfplaneHypothesis:
    """Consistent halfplane whose boundary bisects the version space."""
    vs = version_space(x, y)
    if vs is None:
        return HalfplaneHypothesis(0)
    lo, hi = vs
    b = (lo + hi) // 2
    h = HalfplaneHypothesis((b - QUARTER) & MASK)
    if len(x) and not np.array_equal(h.predict(x), np.asarray(y, dtype=np.int8)):
        raise InconsistentSamples("version space collapsed to its boundary")
    return h


class ERMHalfplaneLearner:
    """Draws ``n`` labeled points and returns the midpoint ERM."""

    def __init__(self, n: int):
        self.n = int(n)

    def fit_samples(self, x, y) -> HalfplaneHypothesis:
        return erm_halfplane(x, y)

    def fit(self, source: SampleSource) -> HalfplaneHypothesis:
        x, y = source.draw(self.n)
        if isinstance(x, CryptoBatch):
            keep = x.flags == 0
            return erm_halfplane(x.clear[keep], y.clear[keep])
        return erm_halfplane(x, y)


class SmoothedClassifier(Classifier):
    """Majority vote of ``f`` over ``m`` evenly spaced probes in [x - eta, x + eta]."""

    def __init__(self, f: Classifier, eta: float, m: int = 257):
        if not 0 < eta < 0.25:
            raise ValueError("eta must lie in (0, 1/4)")
        if m < 1 or m % 2 == 0:
            raise ValueError("m must be a positive odd number")
        self.f, self.eta, self.m = f, eta, m
        self.offsets = np.round(np.linspace(-1.0, 1.0, m) * eta * ONE).astype(np.int64)
        self.cost = m * f.cost

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        out = np.empty(len(x), dtype=np.int8)
        step = max(1, 200_000 // self.m)
        for s in range(0, len(x), step):
            pts = (x[s : s + step, None] + self.offsets[None, :]) & _MASK64
            votes = self.f.predict(pts.ravel()).reshape(pts.shape).astype(np.int64).sum(axis=1)
            out[s : s + step] = np.where(votes > 0, 1, -1)
        return out


def smooth_classifier(f: Classifier, eta: float, m: int = 257) -> SmoothedClassifier:
    return SmoothedClassifier(f, eta, m)


def smallest_arc(theta) -> tuple[int, int] | None:
    """(start, length) of the shortest closed arc covering all points."""
    theta = np.sort(np.asarray(theta, dtype=np.int64) & _MASK64)
    if len(theta) == 0:
        return None
    if len(theta) == 1:
        return int(theta[0]), 0
    gaps = np.empty(len(theta), dtype=np.int64)
    gaps[:-1] = np.diff(theta)
    gaps[-1] = theta[0] + np.int64(ONE) - theta[-1]
    j = int(np.argmax(gaps))
    start = int(theta[(j + 1) % len(theta)])
    return start, ONE - int(gaps[j])


def _in_arc(x, arc) -> np.ndarray:
    start, length = arc
    return ((np.asarray(x, dtype=np.int64) - np.int64(start)) & _MASK64) <= np.int64(length)


class ArcPatchClassifier(Classifier):
    """Labels the two sample-spanned arcs directly and defers to ``base`` elsewhere."""

    def __init__(self, base: Classifier, pos_arc, neg_arc):
        self.base, self.pos_arc, self.neg_arc = base, pos_arc, neg_arc
        self.cost = base.cost + 2

    def predict(self, x) -> np.ndarray:
        y = np.asarray(self.base.predict(x), dtype=np.int8).copy()
        if self.neg_arc is not None:
            y[_in_arc(x, self.neg_arc)] = -1
        if self.pos_arc is not None:
            y[_in_arc(x, self.pos_arc)] = 1
        return y

    def breakpoints(self) -> np.ndarray:
        pts = list(self.base.breakpoints()) if hasattr(self.base, "breakpoints") else []
        for arc in (self.pos_arc, self.neg_arc):
            if arc is not None:
                pts += [arc[0], (arc[0] + arc[1] + 1) & MASK]
        return np.array(pts, dtype=np.int64)


class BoostedLearner:
    """Interval patching on top of a base learner.

    Draws max(K, ceil(9/eta)) samples, fits ``base`` on the first K, and
    overrides its predictions on the smallest arcs spanning each class.
    """

    def __init__(self, K: int, eta: float, base):
        if not 0 < eta < 0.25:
            raise ValueError("eta must lie in (0, 1/4)")
        self.K, self.eta, self.base = int(K), eta, base
        self.n = max(self.K, math.ceil(9 / eta))

    def fit_samples(self, x, y) -> ArcPatchClassifier:
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y)
        f = self.base.fit_samples(x[: self.K], y[: self.K])
        return ArcPatchClassifier(f, smallest_arc(x[y == 1]), smallest_arc(x[y == -1]))

    def fit(self, source: SampleSource) -> ArcPatchClassifier:
        x, y = source.draw(self.n)
        return self.fit_samples(x, y)


def boosted_learner(K: int, eta: float, base) -> BoostedLearner:
    return BoostedLearner(K, eta, base)


# ---------------------------------------------------------------------------
# Encrypted inputs


class CryptoHalfplaneAnswerer:
    """Answers mixed queries with a halfplane: clear slots in the clear,
    encrypted slots by homomorphic evaluation of the halfplane circuit."""

    def __init__(self, h: HalfplaneHypothesis, backend, pk):
        self.h, self.backend, self.pk = h, backend, pk
        self._circuit = None

    @property
    def circuit(self):
        if self._circuit is None:
            self._circuit = halfplane_circuit(self.h.w, N_BITS)
        return self._circuit

    def answer(self, x: CryptoBatch, budget: Budget | None = None) -> CryptoBatch:
        clear_idx = np.flatnonzero(x.flags == 0)
        enc_idx = np.flatnonzero(x.flags == 1)
        charge(budget, ops=len(clear_idx) * self.h.cost)
        labels = np.zeros(len(x), dtype=np.int64)
        labels[clear_idx] = self.h.predict(x.clear[clear_idx])
        cts: list = [None] * len(x)
        if len(enc_idx):
            out = self.backend.eval_batch(self.pk, self.circuit, [[x.cts[i]] for i in enc_idx], budget)
            for i, ct in zip(enc_idx, out):
                cts[i] = ct
        return CryptoBatch(x.flags.copy(), labels, cts, self.pk)


# ---------------------------------------------------------------------------
# Exactly-d-ones


def erm_dones(summary: SampleSummary, rng: np.random.Generator, avoid_extra=None) -> DOnesHypothesis:
    """Consistent d-ones classifier: seen positives padded with unseen indices.

    Padding indices are uniform over [N] minus everything the sample showed
    (and minus ``avoid_extra``), so the result has exactly d ones.
    """
    A = summary.pos_unique
    d, N = summary.d, summary.N
    if len(A) > d:
        raise InconsistentSamples("more than d distinct positives")
    chosen = set(int(a) for a in A)
    extra = set(int(v) for v in np.asarray(avoid_extra if avoid_extra is not None else [], dtype=np.int64))
    idle = 0
    while len(chosen) < d:
        need = d - len(chosen)
        cand = np.unique(rng.integers(0, N, 2 * need + 8, dtype=np.int64))
        cand = cand[~np.isin(cand, np.fromiter(chosen | extra, dtype=np.int64, count=len(chosen | extra)))]
        if len(cand):
            cand = cand[~summary.avoid_mask(cand)]
        if len(cand) == 0:
            idle += 1
            if idle > 10_000:
                raise InconsistentSamples("no unseen index left to pad the positive set")
            continue
        idle = 0
        rng.shuffle(cand)
        for c in cand[:need]:
            chosen.add(int(c))
    return DOnesHypothesis(sorted(chosen), N)


class DOnesERMLearner:
    def __init__(self, n: int):
        self.n = int(n)

    def fit(self, source: SampleSource) -> DOnesHypothesis:
        summary = source.draw_summary(self.n)
        return erm_dones(summary, source.rng)
