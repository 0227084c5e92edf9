"""Zero-sum game between the protocol owner (rows, minimizing) and the
adversary (columns, maximizing): payoff estimation, Nash equilibria,
sparsification and the three-way classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .core import Budget, BudgetExceeded, SampleSource, rng_stream, trial_seed
from .players.attack import AttackError
from .players.learners import InconsistentSamples
from .players.watermark import WatermarkFailure
from .stats import std_error

THRESHOLD = 151 / 192
CLASSES = ("Defense", "Watermark", "TransfAttack")
_FAIL = (BudgetExceeded, AttackError, WatermarkFailure, InconsistentSamples)


@dataclass
class PayoffMatrix:
    entries: np.ndarray
    row_names: list = field(default_factory=list)
    col_names: list = field(default_factory=list)
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=np.float64))
        if self.entries.size == 0:
            raise ValueError("empty payoff matrix")
        if np.any(self.entries < 0) or np.any(self.entries > 1):
            raise ValueError("payoff entries must lie in [0, 1]")
        r, c = self.entries.shape
        self.row_names = list(self.row_names) or [f"r{i}" for i in range(r)]
        self.col_names = list(self.col_names) or [f"c{j}" for j in range(c)]

    @property
    def shape(self):
        return self.entries.shape

    def to_dict(self) -> dict:
        d = {"rows": self.row_names, "cols": self.col_names, "entries": self.entries.tolist()}
        if self.stderr is not None:
            d["stderr"] = np.asarray(self.stderr).tolist()
        return d

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.col_names)]
        for name, row in zip(self.row_names, self.entries):
            lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class NashSolution:
    row_strategy: np.ndarray
    column_strategy: np.ndarray
    value: float
    dual_value: float

    def to_dict(self) -> dict:
        return {
            "row_strategy": self.row_strategy.tolist(),
            "column_strategy": self.column_strategy.tolist(),
            "value": self.value,
        }


@dataclass
class SparseStrategy:
    indices: list
    eta: float
    k: int
    side: str

    def distribution(self, n: int) -> np.ndarray:
        return np.bincount(np.asarray(self.indices, dtype=np.int64), minlength=n) / self.k


def _entries(m) -> np.ndarray:
    G = m.entries if isinstance(m, PayoffMatrix) else np.atleast_2d(np.asarray(m, dtype=np.float64))
    if G.size == 0:
        raise ValueError("empty payoff matrix")
    return G


def solve_nash(matrix) -> NashSolution:
    """Minimax strategies by linear programming (HiGHS).

    Rows minimize, columns maximize.  Both LPs are solved; their values are
    checked against each other.
    """
    G = _entries(matrix)
    r, c = G.shape
    # rows: min v  s.t.  G^T p <= v, sum p = 1, p >= 0
    res_r = linprog(
        np.r_[np.zeros(r), 1.0],
        A_ub=np.c_[G.T, -np.ones(c)], b_ub=np.zeros(c),
        A_eq=np.r_[np.ones(r), 0.0][None, :], b_eq=[1.0],
        bounds=[(0, None)] * r + [(None, None)], method="highs",
    )
    # columns: max u  s.t.  G q >= u, sum q = 1, q >= 0
    res_c = linprog(
        np.r_[np.zeros(c), -1.0],
        A_ub=np.c_[-G, np.ones(r)], b_ub=np.zeros(r),
        A_eq=np.r_[np.ones(c), 0.0][None, :], b_eq=[1.0],
        bounds=[(0, None)] * c + [(None, None)], method="highs",
    )
    if not (res_r.success and res_c.success):
        raise RuntimeError("LP solver failed")
    p = np.clip(res_r.x[:r], 0, None)
    q = np.clip(res_c.x[:c], 0, None)
    p, q = p / p.sum(), q / q.sum()
    v, u = float(res_r.x[-1]), float(-res_c.fun)
    if abs(v - u) > 1e-6:
        raise RuntimeError(f"primal and dual values disagree ({v} vs {u})")
    return NashSolution(p, q, v, u)


def pure_bounds(matrix) -> tuple[float, float]:
    """(max over columns of row-min, min over rows of column-max)."""
    G = _entries(matrix)
    return float(G.min(axis=0).max()), float(G.max(axis=1).min())


class SparsifyError(RuntimeError):
    pass


def sparsify_k(width: int, eta: float) -> int:
    return max(1, math.ceil(math.log(width) / (2 * eta * eta) - 1e-9))


def sparse_guarantee(G: np.ndarray, dist: np.ndarray, value: float, eta: float, side: str) -> tuple[bool, int, float]:
    """Check the eta-approximate guarantee; returns (ok, worst index, worst payoff)."""
    spread = float(G.max() - G.min())
    if side == "row":
        pay = dist @ G
        j = int(np.argmax(pay))
        return bool(pay[j] <= value + eta * spread + 1e-12), j, float(pay[j])
    pay = G @ dist
    i = int(np.argmin(pay))
    return bool(pay[i] >= value - eta * spread - 1e-12), i, float(pay[i])


def sparsify(matrix, mixed, eta: float, side: str = "row", rng=None, max_retries: int = 1000, value: float | None = None) -> SparseStrategy:
    """Uniform multiset of k pure strategies drawn from ``mixed`` that loses at most
    eta * (Gmax - Gmin) against every opposing pure strategy."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if side not in ("row", "column"):
        raise ValueError("side must be 'row' or 'column'")
    G = _entries(matrix)
    mixed = np.asarray(mixed, dtype=np.float64)
    mixed = mixed / mixed.sum()
    width = G.shape[1] if side == "row" else G.shape[0]
    k = sparsify_k(width, eta)
    if value is None:
        value = solve_nash(G).value
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(mixed)
    worst = None
    for _ in range(max_retries):
        idx = rng.choice(n, size=k, p=mixed)
        dist = np.bincount(idx, minlength=n) / k
        ok, j, pay = sparse_guarantee(G, dist, value, eta, side)
        if ok:
            return SparseStrategy(sorted(int(i) for i in idx), eta, k, side)
        worst = (j, pay)
    raise SparsifyError(f"no witness after {max_retries} draws; failing {'column' if side == 'row' else 'row'} {worst[0]} (payoff {worst[1]:.6f})")


def classify_trichotomy(value: float, uniqueness_holds: bool) -> str:
    if not 0 <= value <= 1:
        raise ValueError("value must lie in [0, 1]")
    if value >= THRESHOLD:
        return "Defense"
    return "Watermark" if uniqueness_holds else "TransfAttack"


# ---------------------------------------------------------------------------
# Payoff estimation


def payoff_samples(rowA, colB, task_factory, eps: float, q: int, trials: int, seed: int = 0,
                   budget_A: Budget | None = None, budget_B: Budget | None = None) -> np.ndarray:
    """Per-trial payoffs in {0, 1/2, 1}.

    Row strategies expose ``play(source, rng) -> (f, x)``; column strategies
    ``respond(f, x, source, rng) -> (y, b)``.  Clause one scores B on A's own
    queries (B wins by answering well or by flagging); clause two checks that
    B neither errs nor flags on honest queries.  err(f) > eps hands both
    clauses to B.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    bA = budget_A or Budget()
    bB = budget_B or Budget()
    out = np.empty(trials)
    for t in range(trials):
        task = task_factory(trial_seed(seed, t))
        ra = rng_stream(seed, "payoff", t, "A")
        try:
            f, x = rowA.play(SampleSource(task, ra, bA.fresh()), ra)
        except _FAIL:
            out[t] = 1.0
            continue
        bad_f = task.risk(f) > eps
        rb = rng_stream(seed, "payoff", t, "B1")
        try:
            y, b = colB.respond(f, x, SampleSource(task, rb, bB.fresh()), rb)
            c1 = bad_f or task.empirical_error(x, y) <= 2 * eps or b == 1
        except _FAIL:
            c1 = bad_f
        rb2 = rng_stream(seed, "payoff", t, "B2")
        x2 = task.sample_inputs(q, rb2)
        try:
            y2, b2 = colB.respond(f, x2, SampleSource(task, rb2, bB.fresh()), rb2)
            c2 = bad_f or (task.empirical_error(x2, y2) <= 2 * eps and b2 == 0)
        except _FAIL:
            c2 = bad_f
        out[t] = 0.5 * c1 + 0.5 * c2
    return out


def estimate_payoff(rowA, colB, task_factory, eps: float, q: int, trials: int, seed: int = 0, **budgets) -> float:
    return float(payoff_samples(rowA, colB, task_factory, eps, q, trials, seed, **budgets).mean())


def estimate_payoff_ci(rowA, colB, task_factory, eps, q, trials, seed=0, **budgets) -> tuple[float, float]:
    """(mean, 95% half-width) using the sample standard deviation."""
    s = payoff_samples(rowA, colB, task_factory, eps, q, trials, seed, **budgets)
    sd = float(s.std(ddof=1)) if len(s) > 1 else 0.0
    return float(s.mean()), 1.959963984540054 * sd / math.sqrt(len(s))


def estimate_matrix(rows: Sequence, cols: Sequence, task_factory, eps, q, trials, seed=0, **budgets) -> PayoffMatrix:
    E = np.zeros((len(rows), len(cols)))
    S = np.zeros_like(E)
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            s = payoff_samples(a, b, task_factory, eps, q, trials, int(rng_stream(seed, "cell", i, j).integers(0, 2**62)), **budgets)
            E[i, j] = s.mean()
            S[i, j] = s.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
    return PayoffMatrix(E, [a.name for a in rows], [b.name for b in cols], S)


# ---------------------------------------------------------------------------
# Small explicit suites on the d-ones task


class HonestRow:
    """Plain ERM f and honest queries."""

    def __init__(self, n: int, q: int):
        from .players.learners import DOnesERMLearner

        self.learner, self.q = DOnesERMLearner(n), q
        self.name = f"honest-erm-{n}"

    def play(self, source, rng):
        return self.learner.fit(source), source.draw_inputs(self.q)


class WatermarkRow:
    def __init__(self, builder):
        self.builder = builder
        self.name = builder.name

    def play(self, source, rng):
        out = self.builder.build(source, rng)
        return out.f, out.queries


class ConstantClassifierRow:
    """Publishes a constant classifier; a deliberately bad learner."""

    def __init__(self, label: int, q: int):
        self.label, self.q = label, q
        self.name = f"constant-{'+' if label == 1 else '-'}"

    def play(self, source, rng):
        return ConstantClassifier(self.label), source.draw_inputs(self.q)


class ConstantClassifier:
    cost = 1

    def __init__(self, label: int):
        self.label = int(label)
        self.constant = self.label

    def predict(self, x):
        return np.full(len(x), self.label, dtype=np.int8)

    def classify(self, x, budget=None):
        if budget is not None:
            budget.charge(ops=len(x))
        return self.predict(x)


class EchoColumn:
    def __init__(self, detect: str = "never"):
        self.detect = detect
        self.name = {"never": "echo", "always": "echo-flag", "coin": "echo-coin"}[detect]

    def respond(self, f, x, source, rng):
        y = f.classify(x, source.budget)
        b = {"never": 0, "always": 1}.get(self.detect)
        if b is None:
            b = int(rng.integers(0, 2))
        return y, b


class FreshLearnerColumn:
    def __init__(self, n: int):
        from .players.learners import DOnesERMLearner

        self.learner = DOnesERMLearner(n)
        self.name = f"fresh-learner-{n}"

    def respond(self, f, x, source, rng):
        return self.learner.fit(source).predict(x), 0


class WrappedColumn:
    """A column strategy whose bit is replaced by the Hamming-distance rule."""

    def __init__(self, inner, eps: float):
        self.inner, self.eps = inner, eps
        self.name = f"wrapped-{inner.name}"

    def respond(self, f, x, source, rng):
        from .players.defense import defense_nash_wrapper

        y, b = self.inner.respond(f, x, source, rng)
        return y, defense_nash_wrapper(f, x, lambda _f, _x: (y, b), self.eps)


def uniqueness_rate(rows: Sequence, mix: np.ndarray, prover, task_factory, eps: float, trials: int, seed: int = 0, budget_A=None, budget_P=None) -> tuple[float, int]:
    """P[err(x, prover(x)) <= 2 eps] with x from the mixed row strategy."""
    wins = 0
    mix = np.asarray(mix) / np.sum(mix)
    for t in range(trials):
        task = task_factory(trial_seed(seed, t))
        r = rng_stream(seed, "uniq", t)
        i = int(r.choice(len(rows), p=mix))
        try:
            _, x = rows[i].play(SampleSource(task, r, (budget_A or Budget()).fresh()), r)
        except _FAIL:
            continue
        rp = rng_stream(seed, "uniq", t, "prover")
        try:
            y = prover.answer(x, SampleSource(task, rp, (budget_P or Budget()).fresh()), rp)
        except _FAIL:
            continue
        wins += task.empirical_error(x, y) <= 2 * eps
    return wins / trials, wins


def brute_force_value(G) -> float:
    """Game value by enumerating equal-size supports (exact, LP-free).

    For every pair of k-subsets the indifference equations are solved; any
    solution that is a probability vector on both sides and is a best
    response pair is an equilibrium.
    """
    G = _entries(G)
    r, c = G.shape
    from itertools import combinations

    best = None
    for k in range(1, min(r, c) + 1):
        for I in combinations(range(r), k):
            for J in combinations(range(c), k):
                sub = G[np.ix_(I, J)]
                # row mix p over I makes columns J indifferent at value v
                A = np.zeros((k + 1, k + 1))
                A[:k, :k] = sub.T
                A[:k, k] = -1
                A[k, :k] = 1
                rhs = np.zeros(k + 1)
                rhs[k] = 1
                B = np.zeros((k + 1, k + 1))
                B[:k, :k] = sub
                B[:k, k] = -1
                B[k, :k] = 1
                try:
                    sp = np.linalg.solve(A, rhs)
                    sq = np.linalg.solve(B, rhs)
                except np.linalg.LinAlgError:
                    continue
                p, v = sp[:k], sp[k]
                qv, u = sq[:k], sq[k]
                if np.any(p < -1e-12) or np.any(qv < -1e-12) or abs(v - u) > 1e-9:
                    continue
                pf = np.zeros(r)
                pf[list(I)] = p
                qf = np.zeros(c)
                qf[list(J)] = qv
                if np.max(pf @ G) <= v + 1e-9 and np.min(G @ qf) >= v - 1e-9:
                    return float(v)
    raise RuntimeError("no equilibrium found by support enumeration")


def grid_value(G, pitch: float = 1e-3, rounds: int = 4) -> float:
    """min over row mixtures of the best column response, by simplex grid search
    with local refinement.  Practical for up to three rows."""
    G = _entries(G)
    r = G.shape[0]
    if r == 1:
        return float(G[0].max())
    m = int(round(1 / pitch))
    pts = _simplex_grid(r, m) / m
    vals = (pts @ G).max(axis=1)
    best = pts[int(np.argmin(vals))]
    bval = float(vals.min())
    step = pitch
    for _ in range(rounds):
        sub = 20
        offs = _local_offsets(r, sub) * (step / sub)
        cand = best[None, :] + offs
        cand = cand[np.all(cand >= -1e-15, axis=1)]
        cand = np.clip(cand, 0, None)
        cand /= cand.sum(axis=1, keepdims=True)
        v = (cand @ G).max(axis=1)
        if v.min() < bval:
            bval = float(v.min())
            best = cand[int(np.argmin(v))]
        step /= 10
    return bval


def _simplex_grid(r: int, m: int) -> np.ndarray:
    if r == 1:
        return np.array([[m]])
    out = []
    for i in range(m + 1):
        rest = _simplex_grid(r - 1, m - i)
        out.append(np.c_[np.full(len(rest), i), rest])
    return np.vstack(out)


def _local_offsets(r: int, sub: int) -> np.ndarray:
    """Integer offsets in [-sub, sub]^(r-1), completed to sum zero."""
    axes = np.meshgrid(*[np.arange(-sub, sub + 1)] * (r - 1), indexing="ij")
    o = np.stack([a.ravel() for a in axes], axis=1).astype(np.float64)
    return np.c_[o, -o.sum(axis=1)]
