"""Transductive selective classification with rejection.

Starting from a consistent ERM ``f``, each round searches the hypothesis
class for the ``c`` that disagrees with ``f`` on as many still-accepted test
points as possible while paying ``1 + 1/eps_star`` per training mistake.
When the best normalized score exceeds ``eps_star`` the disagreement region
is rejected and the search repeats, for at most ``ceil(1/eps_star)`` rounds.
"""
from __future__ import annotations

import math

import numpy as np

from ..core import Classifier, SelectiveClassifier
from ..tasks import HALF, MASK, ONE, QUARTER, DOnesHypothesis, HalfplaneHypothesis
from .learners import erm_halfplane

_MASK64 = np.int64(MASK)


def rejectron_eps_star(n: int, eps: float, vc_dim: int = 2) -> float:
    """sqrt(2d/n ln(2n) + ln(1/eps)/n)."""
    return math.sqrt(2 * vc_dim / n * math.log(2 * n) + math.log(1 / eps) / n)


def best_halfplane(test_x, test_target, test_weight: float, train_x, train_target, train_weight: float):
    """Maximize test_weight * #(test hits) - train_weight * #(train hits) over h_v.

    A point "hits" when h_v(x) equals its target label.  The score is
    piecewise constant in v, so evaluating one v per gap between the
    critical angles x -+ 1/4 is exact.  Returns (score, v).
    """
    xs = np.concatenate([np.asarray(test_x, dtype=np.int64), np.asarray(train_x, dtype=np.int64)])
    tg = np.concatenate([np.asarray(test_target), np.asarray(train_target)])
    wt = np.concatenate([np.full(len(test_x), test_weight), np.full(len(train_x), -train_weight)])
    if len(xs) == 0:
        return 0.0, 0
    # each point is hit for v in an arc of length 1/2 starting at s
    s = np.where(tg == 1, xs - np.int64(QUARTER), xs + np.int64(QUARTER)) & _MASK64
    e = (s + np.int64(HALF)) & _MASK64
    pos = np.concatenate([s, e])
    delta = np.concatenate([wt, -wt])
    order = np.argsort(pos, kind="stable")
    pos, delta = pos[order], delta[order]
    gaps = np.empty(len(pos), dtype=np.int64)
    gaps[:-1] = np.diff(pos)
    gaps[-1] = pos[0] + np.int64(ONE) - pos[-1]
    mids = (pos + gaps // 2) & _MASK64
    # score at the wrap gap, computed directly, anchors the cumulative sweep
    v0 = mids[-1]
    base = float(np.sum(wt[((v0 - s) & _MASK64) < np.int64(HALF)]))
    scores = base + np.cumsum(delta)
    scores[-1] = base
    scores[gaps == 0] = -np.inf
    k = int(np.argmax(scores))
    return float(scores[k]), int(mids[k])


def best_flip_set(f: DOnesHypothesis, test_x, accepted, test_weight: float, train_x, train_y, train_weight: float):
    """Exact search over d-ones hypotheses c for the same objective.

    Any c with exactly d ones equals f with j positives swapped out and j
    negatives swapped in.  Gains are additive per index, so for each j the
    best swap takes the j largest gains on each side; scanning j is exact.
    """
    d, N = f.d, f.N
    tx = np.asarray(test_x, dtype=np.int64)[np.asarray(accepted, dtype=bool)]
    trx = np.asarray(train_x, dtype=np.int64)
    tr_y = np.asarray(train_y)
    idx, m = np.unique(tx, return_counts=True)
    gains: dict[int, float] = {}
    for i, c in zip(idx, m):
        gains[int(i)] = gains.get(int(i), 0.0) + test_weight * c
    # training mistakes of c at index i occur when c flips a seen label
    tri, trc = np.unique(trx, return_counts=True)
    for i, c in zip(tri, trc):
        gains[int(i)] = gains.get(int(i), 0.0) - train_weight * c
    fpos = set(int(p) for p in f.positives)
    out_gain = sorted((gains.get(p, 0.0) for p in fpos), reverse=True)
    in_items = sorted(((g, i) for i, g in gains.items() if i not in fpos), reverse=True)
    in_gain = [g for g, _ in in_items if g > 0]
    best, best_j = 0.0, 0
    total = 0.0
    for j in range(1, d + 1):
        g_in = in_gain[j - 1] if j - 1 < len(in_gain) else 0.0
        total += out_gain[j - 1] + g_in
        if total > best:
            best, best_j = total, j
    if best_j == 0:
        return 0.0, f
    drop = sorted(fpos, key=lambda p: -gains.get(p, 0.0))[:best_j]
    add = [i for g, i in in_items if g > 0][:best_j]
    if len(add) < best_j:
        seen = set(gains) | fpos
        cand = 0
        while len(add) < best_j:
            if cand not in seen:
                add.append(cand)
            cand += 1
    newpos = (fpos - set(drop)) | set(add)
    return best, DOnesHypothesis(sorted(newpos), N)


def rejectron(train, test, eps_star: float, f: Classifier | None = None, family: str | None = None, max_rounds: int | None = None) -> SelectiveClassifier:
    """Selective classifier that never relabels: it either returns f(x) or rejects.

    ``train`` is an (x, y) pair, ``test`` the unlabeled test inputs.  The
    trace of rounds is kept on the result as ``rounds``.
    """
    if not 0 < eps_star < 1:
        raise ValueError("eps_star must lie in (0, 1)")
    tr_x, tr_y = train
    tr_x = np.asarray(tr_x, dtype=np.int64)
    tr_y = np.asarray(tr_y)
    test = np.asarray(test, dtype=np.int64)
    if family is None:
        family = "dones" if isinstance(f, DOnesHypothesis) else "halfplane"
    if f is None:
        if family != "halfplane":
            raise ValueError("pass the ERM f for this family")
        f = erm_halfplane(tr_x, tr_y)
    n_test, n_train = len(test), max(len(tr_x), 1)
    lam = 1 + 1 / eps_star
    rounds = math.ceil(1 / eps_star) if max_rounds is None else max_rounds
    f_test = f.predict(test)
    accepted = np.ones(n_test, dtype=bool)
    rejectors: list[Classifier] = []
    trace = []
    if n_test == 0:
        sel = SelectiveClassifier(f, [])
        sel.rounds = trace
        return sel
    for _ in range(rounds):
        if family == "halfplane":
            acc = np.flatnonzero(accepted)
            score, v = best_halfplane(test[acc], -f_test[acc], 1.0 / n_test, tr_x, -tr_y, lam / n_train)
            c = HalfplaneHypothesis(v)
        elif family == "dones":
            score, c = best_flip_set(f, test, accepted, 1.0 / n_test, tr_x, tr_y, lam / n_train)
        else:
            raise NotImplementedError(f"no class search for family {family!r}")
        trace.append(score)
        if score <= eps_star:
            break
        newly = accepted & (c.predict(test) != f_test)
        if not newly.any():
            break
        accepted &= ~newly
        rejectors.append(c)
    sel = SelectiveClassifier(f, rejectors)
    sel.rounds = trace
    return sel
