"""Learning tasks: halfplanes on the circle, its encrypted variant, and exactly-d-ones."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Classifier, LearningTask, rng_stream
from .fhe import Ciphertext, KeyPair, SealedFHE

N_BITS = 62
ONE = 1 << N_BITS
HALF = ONE >> 1
QUARTER = ONE >> 2
MASK = ONE - 1

_MASK64 = np.int64(MASK)
_Q64 = np.int64(QUARTER)


# ---------------------------------------------------------------------------
# Circle geometry (angles are int64 counts of 2^-62 turns)


def to_fixed(turns: float) -> int:
    return int(round((turns % 1.0) * ONE)) & MASK


def to_turns(theta) -> float | np.ndarray:
    return np.asarray(theta, dtype=np.float64) / ONE


def wrap(theta) -> np.ndarray:
    return np.asarray(theta, dtype=np.int64) & _MASK64


def circ_dist(a, b) -> np.ndarray:
    """Angular distance in fixed-point units (at most HALF)."""
    d = (np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)) & _MASK64
    return np.minimum(d, (-d) & _MASK64)


def halfplane_labels(w: int, theta) -> np.ndarray:
    d = (np.asarray(theta, dtype=np.int64) - np.int64(w)) & _MASK64
    return np.where((d < _Q64) | (d > np.int64(3 * QUARTER)), 1, -1).astype(np.int8)


@dataclass(frozen=True)
class CirclePoint:
    theta: int  # fixed-point angle, 62 fractional bits

    def __post_init__(self):
        if not 0 <= self.theta < ONE:
            raise ValueError("theta must lie in [0, 2^62)")

    @classmethod
    def from_turns(cls, t: float) -> "CirclePoint":
        return cls(to_fixed(t))

    @classmethod
    def from_hex(cls, s: str) -> "CirclePoint":
        return cls(int(s, 16) & MASK)

    @property
    def turns(self) -> float:
        return self.theta / ONE

    def hex(self) -> str:
        return f"{self.theta:016x}"

    def __add__(self, other: "CirclePoint") -> "CirclePoint":
        return CirclePoint((self.theta + other.theta) & MASK)

    def __sub__(self, other: "CirclePoint") -> "CirclePoint":
        return CirclePoint((self.theta - other.theta) & MASK)


def _as_theta(w) -> int:
    return w.theta if isinstance(w, CirclePoint) else int(w) & MASK


class HalfplaneHypothesis(Classifier):
    """+1 iff (x - w) mod 1 lies strictly inside (-1/4, 1/4)."""

    cost = 1

    def __init__(self, w):
        self.w = _as_theta(w)

    def predict(self, x) -> np.ndarray:
        return halfplane_labels(self.w, x)

    def breakpoints(self) -> np.ndarray:
        return np.array([(self.w + QUARTER) & MASK, (self.w - QUARTER) & MASK], dtype=np.int64)

    def __repr__(self):
        return f"HalfplaneHypothesis(w={self.w / ONE:.6f})"


@dataclass(frozen=True)
class ArcBand:
    """Points within ``alpha`` turns of either boundary point w +- 1/4."""

    w: int
    alpha: int  # fixed-point half-width

    def __post_init__(self):
        if not 0 <= self.alpha < QUARTER:
            raise ValueError("alpha must lie in [0, 1/4) turn")

    @classmethod
    def from_turns(cls, w, alpha_turns: float) -> "ArcBand":
        if not 0 <= alpha_turns < 0.25:
            raise ValueError("alpha must lie in [0, 1/4) turn")
        return cls(_as_theta(w), int(round(alpha_turns * ONE)))

    @property
    def measure(self) -> float:
        return 4 * self.alpha / ONE

    def centres(self) -> tuple[int, int]:
        return (self.w + QUARTER) & MASK, (self.w - QUARTER) & MASK

    def contains(self, theta) -> np.ndarray:
        c1, c2 = self.centres()
        return np.minimum(circ_dist(theta, c1), circ_dist(theta, c2)) <= self.alpha


def band_sampler(band: ArcBand):
    """Sampler ``rng, n -> angles`` uniform over the band's two arcs."""

    if band.alpha >= QUARTER:
        raise ValueError("alpha must be below 1/4 turn")
    c = np.array(band.centres(), dtype=np.int64)

    def draw(rng: np.random.Generator, n: int = 1) -> np.ndarray:
        side = rng.integers(0, 2, n)
        off = rng.integers(-band.alpha, band.alpha + 1, n, dtype=np.int64)
        return (c[side] + off) & _MASK64

    return draw


def circle_disagreement(f: Classifier, g: Classifier, grid: int = 1 << 16) -> float:
    """Uniform measure of {x : f(x) != g(x)}.

    Exact when both classifiers expose ``breakpoints``; otherwise a
    deterministic midpoint grid of ``grid`` cells is used.
    """
    if hasattr(f, "breakpoints") and hasattr(g, "breakpoints"):
        bp = np.unique(np.concatenate([f.breakpoints(), g.breakpoints()]).astype(np.int64) & _MASK64)
        if len(bp) == 0:
            pts = np.array([0], dtype=np.int64)
            return float(np.mean(f.predict(pts) != g.predict(pts)))
        nxt = np.roll(bp, -1)
        lengths = (nxt - bp) & _MASK64
        if len(bp) == 1:
            lengths = np.array([ONE], dtype=object)
        mids = (bp + np.asarray(lengths // 2, dtype=np.int64)) & _MASK64
        dis = f.predict(mids) != g.predict(mids)
        return float(sum(int(l) for l, d in zip(lengths, dis) if d) / ONE)
    step = ONE // grid
    pts = (np.arange(grid, dtype=np.int64) * np.int64(step) + np.int64(step // 2)) & _MASK64
    return float(np.mean(f.predict(pts) != g.predict(pts)))


def band_error(f: Classifier, g: Classifier, band: ArcBand) -> float:
    """P[f != g] under the uniform distribution on ``band`` (exact for
    breakpoint classifiers)."""
    if band.alpha == 0:
        raise ValueError("band has zero measure")
    c1, c2 = band.centres()
    edges = [(c1 - band.alpha) & MASK, (c1 + band.alpha + 1) & MASK, (c2 - band.alpha) & MASK, (c2 + band.alpha + 1) & MASK]
    bp = np.unique(np.concatenate([f.breakpoints(), g.breakpoints(), np.array(edges, dtype=np.int64)]) & _MASK64)
    lengths = (np.roll(bp, -1) - bp) & _MASK64
    mids = (bp + lengths // 2) & _MASK64
    hit = (f.predict(mids) != g.predict(mids)) & band.contains(mids)
    return float(sum(int(l) for l, h in zip(lengths, hit) if h) / (4 * band.alpha + 2))


def disagreement_segments(f: Classifier, g: Classifier) -> list[tuple[int, int]]:
    """(start, length) arcs where two breakpoint classifiers disagree."""
    bp = np.unique(np.concatenate([f.breakpoints(), g.breakpoints()]).astype(np.int64) & _MASK64)
    if len(bp) < 2:
        return []
    lengths = (np.roll(bp, -1) - bp) & _MASK64
    mids = (bp + lengths // 2) & _MASK64
    dis = f.predict(mids) != g.predict(mids)
    return [(int(b), int(l)) for b, l, d in zip(bp, lengths, dis) if d and l > 0]


def sample_segments(segments, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws from a union of disjoint arcs."""
    lengths = np.array([l for _, l in segments], dtype=np.float64)
    which = rng.choice(len(segments), n, p=lengths / lengths.sum())
    starts = np.array([s for s, _ in segments], dtype=np.int64)[which]
    lens = np.array([l for _, l in segments], dtype=np.int64)[which]
    off = (rng.random(n) * lens).astype(np.int64)
    return (starts + off) & _MASK64


class CircleTask(LearningTask):
    name = "circle"

    def __init__(self, w):
        self.w = _as_theta(w)
        self.h = HalfplaneHypothesis(self.w)

    def sample_inputs(self, n, rng):
        return rng.integers(0, ONE, n, dtype=np.int64)

    def sample(self, n, rng):
        x = self.sample_inputs(n, rng)
        return x, self.h.predict(x)

    def errors(self, queries, answers):
        y = np.asarray(answers)
        return (self.h.predict(queries) != y).astype(np.float64)

    def risk(self, f):
        return circle_disagreement(f, self.h)

    def descriptor(self):
        return {"family": "circle", "w": f"{self.w:016x}"}


def circle_task(w) -> CircleTask:
    return CircleTask(w)


# ---------------------------------------------------------------------------
# Exactly-d-ones over [N]


class DOnesHypothesis(Classifier):
    cost = 1

    def __init__(self, positives, N: int):
        pos = np.unique(np.asarray(positives, dtype=np.int64))
        if len(pos) and (pos[0] < 0 or pos[-1] >= N):
            raise ValueError("positive index outside [N]")
        self.positives = pos
        self.N = int(N)
        self._set = frozenset(int(p) for p in pos)

    @property
    def d(self) -> int:
        return len(self.positives)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        return np.where(np.isin(x, self.positives), 1, -1).astype(np.int8)

    def __contains__(self, i) -> bool:
        return int(i) in self._set


class SampleSummary:
    """Labeled sample of size ``n`` from the d-ones task, possibly lazy.

    Small samples are stored explicitly.  Large ones keep the positive draws
    explicitly and represent the negative draws by their count, answering
    membership questions about individual indices on demand with memoized
    coin flips.  Membership answers follow the exact law of an explicit
    sample of the same size.
    """

    def __init__(self, n: int, positives: np.ndarray, neg_count: int, N: int, d: int, rng, neg_explicit=None, pos_explicit=None, truth=None):
        self.n = n
        self.pos_draws = positives
        self.neg_count = neg_count
        self.N, self.d = N, d
        self._rng = rng
        self._neg_explicit = neg_explicit
        self._memo: dict[int, bool] = {}
        self._truth = truth
        self.pos_unique = np.unique(positives)
        if self._neg_explicit is not None:
            self._neg_unique = np.unique(self._neg_explicit)
        # P[a given negative index appears among neg_count uniform negative draws]
        self._p_hit = -np.expm1(neg_count * np.log1p(-1.0 / (N - d))) if N > d else 0.0

    @property
    def explicit(self) -> bool:
        return self._neg_explicit is not None

    def neg_contains(self, idx) -> np.ndarray:
        """Whether each index appeared as a negative draw."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.explicit:
            return np.isin(idx, self._neg_unique)
        out = np.zeros(len(idx), dtype=bool)
        is_pos = self._truth.predict(idx) == 1
        for k, i in enumerate(idx):
            if is_pos[k]:
                continue
            i = int(i)
            if i not in self._memo:
                self._memo[i] = bool(self._rng.random() < self._p_hit)
            out[k] = self._memo[i]
        return out

    def pos_contains(self, idx) -> np.ndarray:
        return np.isin(np.asarray(idx, dtype=np.int64), self.pos_unique)

    def neg_indices(self) -> np.ndarray:
        if not self.explicit:
            raise ValueError("negative draws are not materialized")
        return self._neg_unique

    def avoid_mask(self, idx) -> np.ndarray:
        """True where the index was seen in the sample at all."""
        return self.pos_contains(idx) | self.neg_contains(idx)


EXPLICIT_LIMIT = 2_000_000


class DOnesTask(LearningTask):
    name = "dones"

    def __init__(self, h: DOnesHypothesis, seed: int | None = None):
        self.h = h
        self.N = h.N
        self.d = h.d
        self.seed = seed

    def sample_inputs(self, n, rng):
        return rng.integers(0, self.N, n, dtype=np.int64)

    def sample(self, n, rng):
        x = self.sample_inputs(n, rng)
        return x, self.h.predict(x)

    def sample_summary(self, n: int, rng: np.random.Generator) -> SampleSummary:
        if n <= EXPLICIT_LIMIT:
            x, y = self.sample(n, rng)
            return SampleSummary(n, x[y == 1], int(np.sum(y == -1)), self.N, self.d, rng, neg_explicit=x[y == -1], truth=self.h)
        k = int(rng.binomial(n, self.d / self.N))
        pos = self.h.positives[rng.integers(0, self.d, k)]
        return SampleSummary(n, pos, n - k, self.N, self.d, rng, truth=self.h)

    def errors(self, queries, answers):
        return (self.h.predict(queries) != np.asarray(answers)).astype(np.float64)

    def risk(self, f):
        """Exact risk for set classifiers, which expose their positive set."""
        const = getattr(f, "constant", None)
        if const is not None:
            return (self.N - self.d) / self.N if const == 1 else self.d / self.N
        if not hasattr(f, "positives"):
            raise NotImplementedError("exact risk needs a set classifier")
        fp = np.asarray(f.positives, dtype=np.int64)
        sym = len(np.setxor1d(fp, self.h.positives))
        return sym / self.N

    def descriptor(self):
        return {"family": "dones", "d": self.d, "seed": self.seed}


def dones_task(d: int, seed: int = 0, N: int | None = None) -> tuple[DOnesTask, DOnesHypothesis]:
    if d < 1:
        raise ValueError("d must be at least 1")
    N = 100 * d * d if N is None else int(N)
    rng = rng_stream(seed, "dones-h")
    pos: set[int] = set()
    while len(pos) < d:
        pos.update(int(v) for v in rng.integers(0, N, d - len(pos)))
    h = DOnesHypothesis(sorted(pos), N)
    return DOnesTask(h, seed), h


# ---------------------------------------------------------------------------
# Encrypted circle task


@dataclass(frozen=True)
class CryptoSample:
    flag: int
    payload: object  # fixed-point angle (flag 0) or Ciphertext (flag 1)
    pk: object


class CryptoBatch:
    """Columnar batch of mixed clear / encrypted values.

    Used for both inputs (clear angles) and labels (clear +-1).  ``cts[i]``
    is a Ciphertext for encrypted slots and ``None`` otherwise; the clear
    column holds 0 in encrypted slots.
    """

    def __init__(self, flags, clear, cts: Sequence, pk):
        self.flags = np.asarray(flags, dtype=np.int8)
        self.clear = np.asarray(clear, dtype=np.int64)
        self.cts = list(cts)
        self.pk = pk
        if not (len(self.flags) == len(self.clear) == len(self.cts)):
            raise ValueError("column lengths differ")

    def __len__(self):
        return len(self.flags)

    def __getitem__(self, i) -> CryptoSample:
        if self.flags[i]:
            return CryptoSample(1, self.cts[i], self.pk)
        return CryptoSample(0, int(self.clear[i]), self.pk)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def concat(cls, parts: Sequence["CryptoBatch"]) -> "CryptoBatch":
        return cls(
            np.concatenate([p.flags for p in parts]),
            np.concatenate([p.clear for p in parts]),
            [c for p in parts for c in p.cts],
            parts[0].pk if parts else None,
        )

    def take(self, idx) -> "CryptoBatch":
        idx = np.asarray(idx, dtype=np.int64)
        return CryptoBatch(self.flags[idx], self.clear[idx], [self.cts[i] for i in idx], self.pk)

    def serial(self) -> list[str]:
        return [c.hex() if f else f"{int(v) & MASK:016x}" for f, v, c in zip(self.flags, self.clear, self.cts)]


class CryptoTask(LearningTask):
    """Mixture of clear and encrypted halfplane samples.

    The harness keeps the key pair; players only see ``public`` = (backend, pk).
    """

    name = "crypto"

    def __init__(self, lam: int, w, backend: SealedFHE, keys: KeyPair | None = None):
        self.lam = lam
        self.w = _as_theta(w)
        self.h = HalfplaneHypothesis(self.w)
        self.backend = backend
        self._keys = keys if keys is not None else backend.keygen(lam)

    @property
    def pk(self):
        return self._keys.pk

    @property
    def public(self):
        return self.backend, self._keys.pk

    def _draw(self, n, rng, labels: bool):
        flags = rng.integers(0, 2, n).astype(np.int8)
        theta = rng.integers(0, ONE, n, dtype=np.int64)
        enc = np.flatnonzero(flags)
        cts: list = [None] * n
        for i, ct in zip(enc, self.backend.encrypt_many(self.pk, theta[enc], N_BITS)):
            cts[i] = ct
        clear = np.where(flags == 1, 0, theta)
        x = CryptoBatch(flags, clear, cts, self.pk)
        if not labels:
            return x
        y_clear = self.h.predict(theta)
        ycts: list = [None] * n
        bits = (y_clear[enc] == 1).astype(np.int64)
        for i, ct in zip(enc, self.backend.encrypt_many(self.pk, bits, 1)):
            ycts[i] = ct
        y = CryptoBatch(flags, np.where(flags == 1, 0, y_clear), ycts, self.pk)
        return x, y

    def sample(self, n, rng):
        return self._draw(n, rng, labels=True)

    def sample_inputs(self, n, rng):
        return self._draw(n, rng, labels=False)

    def _decrypt(self, ct):
        if not isinstance(ct, Ciphertext):
            return None
        return self.backend.decrypt(self._keys.sk, ct)

    def _one(self, x: CryptoSample, y) -> int:
        if x.flag == 0:
            if isinstance(y, Ciphertext) or y is None:
                return 1
            return int(int(self.h.predict(np.array([x.payload]))[0]) != int(y))
        xv = self._decrypt(x.payload)
        yv = self._decrypt(y)
        if xv is None or yv is None or getattr(y, "n_bits", 0) != 1 or getattr(x.payload, "n_bits", 0) != N_BITS:
            return 1  # undecryptable pairs count as errors
        truth = int(self.h.predict(np.array([xv]))[0])
        return int(truth != (1 if yv else -1))

    def errors(self, queries: CryptoBatch, answers) -> np.ndarray:
        if len(queries) != len(answers):
            raise ValueError("queries and answers differ in length")
        if isinstance(answers, CryptoBatch):
            ans = [answers.cts[i] if answers.flags[i] else int(answers.clear[i]) for i in range(len(answers))]
        else:
            ans = list(answers)
        return np.array([self._one(queries[i], ans[i]) for i in range(len(queries))], dtype=np.float64)

    def error_oracle(self, x: CryptoSample, y) -> int:
        return self._one(x, y)

    def risk(self, f) -> float:
        """err(f) for a plaintext circle classifier that is also applied
        homomorphically on encrypted inputs."""
        return circle_disagreement(f, self.h)

    def decrypt_inputs(self, batch: CryptoBatch) -> np.ndarray:
        """Harness-side plaintext angles (used for diagnostics and tests)."""
        out = batch.clear.copy()
        for i in np.flatnonzero(batch.flags):
            v = self._decrypt(batch.cts[i])
            out[i] = -1 if v is None else v
        return out

    def decrypt_label(self, ct) -> int | None:
        v = self._decrypt(ct)
        return None if v is None else (1 if v else -1)

    def descriptor(self):
        return {"family": "crypto", "w": f"{self.w:016x}", "lambda": self.lam}


def crypto_task(lam: int, w, backend: SealedFHE) -> CryptoTask:
    return CryptoTask(lam, w, backend)


def task_from_descriptor(desc: dict, seed: int = 0):
    fam = desc.get("family")
    if fam == "circle":
        return circle_task(CirclePoint.from_hex(desc["w"]))
    if fam == "dones":
        return dones_task(int(desc["d"]), int(desc.get("seed", seed)))[0]
    if fam == "crypto":
        return crypto_task(int(desc.get("lambda", 128)), CirclePoint.from_hex(desc["w"]), SealedFHE(seed))
    raise ValueError(f"unknown task family {fam!r}")
