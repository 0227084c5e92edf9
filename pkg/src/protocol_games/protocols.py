"""Game runners for the three protocols and their statistical verdicts."""
from __future__ import annotations

import hashlib
import json
import operator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Budget, BudgetExceeded, ConfigError, ProtocolParams, SampleSource, rng_stream, trial_seed
from .stats import run_indistinguishability_suite, wilson_interval
from .players.attack import AttackError
from .players.learners import InconsistentSamples
from .players.watermark import WatermarkFailure

RELATIONS = {">=": operator.ge, "<=": operator.le, "<": operator.lt, ">": operator.gt}

# failures a player can suffer inside a trial; each counts against that player
PLAYER_FAILURES = (BudgetExceeded, AttackError, WatermarkFailure, InconsistentSamples)


@dataclass
class PropertyResult:
    estimate: float
    ci: tuple[float, float]
    threshold: float
    relation: str
    trials: int
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(RELATIONS[self.relation](self.estimate, self.threshold))

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci": [self.ci[0], self.ci[1]],
            "threshold": self.threshold,
            "relation": self.relation,
            "trials": self.trials,
            "passed": self.passed,
            "detail": self.detail,
        }


def rate_property(successes: int, n: int, threshold: float, relation: str, detail=None) -> PropertyResult:
    return PropertyResult(successes / n, wilson_interval(successes, n), threshold, relation, n, detail or {})


def _extreme(per: dict[str, tuple[int, int]], threshold: float, relation: str, pick, shift: float = 0.0) -> PropertyResult:
    """Worst case over a suite; ``per`` maps strategy -> (successes, n)."""
    if not per:
        raise ConfigError("empty strategy suite")
    name = pick(per, key=lambda k: per[k][0] / per[k][1])
    k, n = per[name]
    lo, hi = wilson_interval(k, n)
    detail = {s: {"estimate": round(a / b - shift, 12), "trials": b} for s, (a, b) in per.items()}
    detail["_worst"] = name
    return PropertyResult(k / n - shift, (lo - shift, hi - shift), threshold, relation, n, detail)


@dataclass
class Verdict:
    kind: str
    properties: dict[str, PropertyResult]
    params: dict
    suite_fingerprint: str
    extras: dict = field(default_factory=dict)
    transcripts: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties.values())

    def __getattr__(self, name):
        props = self.__dict__.get("properties", {})
        if name in props:
            return props[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "properties": {k: v.to_dict() for k, v in self.properties.items()},
            "params": self.params,
            "suite_fingerprint": self.suite_fingerprint,
            "extras": self.extras,
        }


class WatermarkVerdict(Verdict):
    pass


class DefenseVerdict(Verdict):
    pass


class TransfAttackVerdict(Verdict):
    pass


def fingerprint(strategies: Sequence) -> str:
    desc = sorted(f"{type(s).__name__}:{getattr(s, 'name', '')}" for s in strategies)
    return hashlib.sha256(json.dumps(desc).encode()).hexdigest()[:16]


def run_trials(fn: Callable[[int], object], trials: int, threads: int = 1) -> list:
    """Run fn(0..trials-1); results come back in trial order."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(trials)))


def _tally(records, key) -> dict[str, tuple[int, int]]:
    out: dict[str, list[int]] = {}
    for rec in records:
        for name, ok in rec[key].items():
            c = out.setdefault(name, [0, 0])
            c[0] += int(ok)
            c[1] += 1
    return {k: (a, b) for k, (a, b) in out.items()}


def _row(trial, strategy, err, b, seed):
    return {"trial": trial, "strategy": strategy, "err": None if err is None else round(float(err), 10), "b": b, "seed": seed}


# ---------------------------------------------------------------------------
# Watermark


def run_watermark_game(
    builder,
    adversary_suite: Sequence,
    uniqueness_prover,
    params: ProtocolParams,
    trials: int,
    task_factory: Callable[[int], object],
    distinguisher_suite: Sequence = (),
    seed: int = 0,
    threads: int = 1,
    f_error_threshold: float | None = None,
    tolerances: dict | None = None,
) -> WatermarkVerdict:
    """Correctness, uniqueness, unremovability and undetectability of a watermark.

    Each trial draws a fresh task from ``task_factory(trial_seed)``.  The
    builder and prover run under ``params.defender_budget``; removers and
    distinguishers under ``params.attacker_budget``.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if not adversary_suite:
        raise ConfigError("adversary suite is empty")
    eps, q = params.epsilon, params.q
    thr_f = eps if f_error_threshold is None else f_error_threshold
    tol = {"correctness_rate": 0.0, "uniqueness_rate": 0.0, "unremovability_max_success": 0.0, "undetectability_advantage": 0.0}
    tol.update(tolerances or {})
    two_eps = params.transfer_factor * eps

    def one(t):
        ts = trial_seed(seed, t)
        task = task_factory(ts)
        rb = rng_stream(seed, "watermark", t, "builder")
        rec = {"correct": {}, "unique": {}, "removal": {}, "detect": {}, "rows": []}
        try:
            out = builder.build(SampleSource(task, rb, params.defender_budget.fresh()), rb)
        except PLAYER_FAILURES:
            rec["correct"]["builder"] = False
            rec["unique"][uniqueness_prover.name] = False
            for a in adversary_suite:
                rec["removal"][a.name] = True
            for dist in distinguisher_suite:
                rec["detect"][dist.name] = True
            rec["rows"].append(_row(t, builder.name, None, None, ts))
            return rec
        risk = task.risk(out.f)
        rec["correct"]["builder"] = risk <= thr_f
        rec["rows"].append(_row(t, builder.name, risk, None, ts))
        rp = rng_stream(seed, "watermark", t, "prover")
        try:
            y = uniqueness_prover.answer(out.queries, SampleSource(task, rp, params.defender_budget.fresh()), rp)
            err = task.empirical_error(out.queries, y) if q else 0.0
            rec["unique"][uniqueness_prover.name] = err <= two_eps
            rec["branch"] = {("planted" if out.is_planted else "fresh"): err <= two_eps}
        except PLAYER_FAILURES:
            err = None
            rec["unique"][uniqueness_prover.name] = False
        rec["rows"].append(_row(t, uniqueness_prover.name, err, None, ts))
        for a in adversary_suite:
            ra = rng_stream(seed, "watermark", t, "remover", a.name)
            try:
                y = a.answer(out.f, out.queries, SampleSource(task, ra, params.attacker_budget.fresh()), ra)
                err = task.empirical_error(out.queries, y) if q else 0.0
                rec["removal"][a.name] = err <= two_eps
            except PLAYER_FAILURES:
                err = None
                rec["removal"][a.name] = False
            rec["rows"].append(_row(t, a.name, err, None, ts))
        if distinguisher_suite:
            rd = rng_stream(seed, "watermark", t, "challenge")
            b = int(rd.integers(0, 2))
            x = out.queries if b else task.sample_inputs(q, rd)
            for dist in distinguisher_suite:
                rg = rng_stream(seed, "watermark", t, "distinguisher", dist.name)
                try:
                    g = int(dist.guess(out.f, x, SampleSource(task, rg, params.attacker_budget.fresh()), rg))
                except PLAYER_FAILURES:
                    g = None
                rec["detect"][dist.name] = g == b
                rec["rows"].append(_row(t, dist.name, None, g, ts))
        return rec

    records = run_trials(one, trials, threads)
    props = {}
    k, n = _tally(records, "correct")["builder"]
    props["correctness_rate"] = rate_property(k, n, params.l - tol["correctness_rate"], ">=")
    k, n = _tally(records, "unique")[uniqueness_prover.name]
    branches = {b: {"estimate": a / m, "trials": m} for b, (a, m) in _tally([r for r in records if "branch" in r], "branch").items()}
    props["uniqueness_rate"] = rate_property(k, n, params.c - tol["uniqueness_rate"], ">=", {"by_branch": branches})
    props["unremovability_max_success"] = _extreme(_tally(records, "removal"), params.s + tol["unremovability_max_success"], "<=", max)
    if distinguisher_suite:
        adv_thr = tol.get("undetectability_threshold", params.s / 2) + tol["undetectability_advantage"]
        props["undetectability_advantage"] = _extreme(_tally(records, "detect"), adv_thr, "<=", max, shift=0.5)
    suite = [builder, uniqueness_prover, *adversary_suite, *distinguisher_suite]
    return WatermarkVerdict(
        "watermark", props, params.to_dict(), fingerprint(suite),
        {"f_error_threshold": thr_f},
        [r for rec in records for r in rec["rows"]],
    )


# ---------------------------------------------------------------------------
# Defense


def run_defense_game(
    defender,
    attacker_suite: Sequence,
    params: ProtocolParams,
    trials: int,
    task_factory: Callable[[int], object],
    seed: int = 0,
    threads: int = 1,
) -> DefenseVerdict:
    """Correctness of f, completeness on honest queries, soundness per attacker.

    Attackers may declare ``privileges`` (e.g. ground truth); the harness
    hands exactly those items over, which is how unbounded attackers are
    stood in for.
    """
    if not attacker_suite:
        raise ConfigError("attacker suite is empty")
    eps, q = params.epsilon, params.q
    bad = params.soundness_factor * eps

    def one(t):
        ts = trial_seed(seed, t)
        task = task_factory(ts)
        rd = rng_stream(seed, "defense", t, "defender")
        rec = {"correct": {}, "complete": {}, "violation": {}, "rows": []}
        try:
            session = defender.publish(SampleSource(task, rd, params.defender_budget.fresh()), rd)
        except PLAYER_FAILURES:
            rec["correct"]["defender"] = False
            rec["complete"]["defender"] = False
            for a in attacker_suite:
                rec["violation"][a.name] = True
            return rec
        risk = task.risk(session.f)
        rec["correct"]["defender"] = risk <= eps
        rh = rng_stream(seed, "defense", t, "honest")
        xh = task.sample_inputs(q, rh)
        b, _ = defender.detect(session, xh, rh)
        rec["complete"]["defender"] = b == 0
        rec["rows"].append(_row(t, "honest", task.empirical_error(xh, session.f.predict(xh)), b, ts))
        for a in attacker_suite:
            ra = rng_stream(seed, "defense", t, "attacker", a.name)
            view = {}
            for p in getattr(a, "privileges", ()):
                view[p] = {"truth": task.h, "train_x": session.train_x}[p]
            try:
                x = a.attack(session.f, SampleSource(task, ra, params.attacker_budget.fresh()), ra, view)
            except PLAYER_FAILURES:
                rec["violation"][a.name] = False
                rec["rows"].append(_row(t, a.name, None, None, ts))
                continue
            b, _ = defender.detect(session, x, ra)
            err = task.empirical_error(x, session.f.predict(x))
            rec["violation"][a.name] = err > bad and b == 0
            rec["rows"].append(_row(t, a.name, err, b, ts))
        return rec

    records = run_trials(one, trials, threads)
    props = {}
    k, n = _tally(records, "correct")["defender"]
    props["correctness_rate"] = rate_property(k, n, params.l, ">=")
    k, n = _tally(records, "complete")["defender"]
    props["completeness_rate"] = rate_property(k, n, params.c, ">=")
    props["soundness_violation_max"] = _extreme(_tally(records, "violation"), params.s, "<=", max)
    return DefenseVerdict(
        "defense", props, params.to_dict(), fingerprint([defender, *attacker_suite]), {},
        [r for rec in records for r in rec["rows"]],
    )


# ---------------------------------------------------------------------------
# Transferable attack


def run_transfattack_game(
    attacker,
    defender_suite: Sequence,
    params: ProtocolParams,
    trials: int,
    task_factory: Callable[[int], object],
    distinguisher_suite: Sequence = (),
    indist_trials: int | None = None,
    seed: int = 0,
    threads: int = 1,
    adv_threshold: float | None = None,
    distinguisher_budget: Budget | None = None,
) -> TransfAttackVerdict:
    """Transferability against each defender, plus undetectability of the queries.

    Defenders see only the queries (never the attacker's state) and run
    under ``params.defender_budget``; the attacker under ``attacker_budget``.
    Distinguishers default to the defender budget.
    """
    if not defender_suite:
        raise ConfigError("defender suite is empty")
    eps = params.epsilon
    two_eps = params.transfer_factor * eps

    def one(t):
        ts = trial_seed(seed, t)
        task = task_factory(ts)
        ra = rng_stream(seed, "transfer", t, "attacker")
        rec = {"transfer": {}, "rows": []}
        try:
            out = attacker.attack(SampleSource(task, ra, params.attacker_budget.fresh()), ra)
        except PLAYER_FAILURES:
            for dfn in defender_suite:
                rec["transfer"][dfn.name] = False
            return rec
        for dfn in defender_suite:
            rd = rng_stream(seed, "transfer", t, "defender", dfn.name)
            try:
                y = dfn.answer(out.queries, SampleSource(task, rd, params.defender_budget.fresh()), rd)
                err = task.empirical_error(out.queries, y)
            except PLAYER_FAILURES:
                err = 1.0  # a defender out of budget answers nothing correctly
            rec["transfer"][dfn.name] = err > two_eps
            rec["rows"].append(_row(t, dfn.name, err, None, ts))
        return rec

    records = run_trials(one, trials, threads)
    props = {"transferability_min": _extreme(_tally(records, "transfer"), params.c, ">=", min)}
    rows = [r for rec in records for r in rec["rows"]]
    if distinguisher_suite:
        n_rounds = indist_trials or trials
        suite = {}
        for dist in distinguisher_suite:
            suite[dist.name] = _wrap_distinguisher(dist)

        def d0(rng):
            task = task_factory(int(rng.integers(0, 2**62)))
            return task, task.sample_inputs(params.q, rng)

        def d1(rng):
            task = task_factory(int(rng.integers(0, 2**62)))
            return task, attacker.attack(SampleSource(task, rng, params.attacker_budget.fresh()), rng).queries

        est = run_indistinguishability_suite(d0, d1, suite, n_rounds, seed=int(rng_stream(seed, "transfer-indist").integers(0, 2**62)), budget=distinguisher_budget or params.defender_budget)
        per = {k: (v.wins, v.trials) for k, v in est.items()}
        thr = params.s / 2 if adv_threshold is None else adv_threshold
        props["undetectability_advantage"] = _extreme(per, thr, "<=", max, shift=0.5)
    return TransfAttackVerdict(
        "transfattack", props, params.to_dict(), fingerprint([attacker, *defender_suite, *distinguisher_suite]), {}, rows,
    )


def _wrap_distinguisher(dist):
    def A(pair, rng, budget):
        task, x = pair
        return dist.guess(x, SampleSource(task, rng, budget), rng)

    return A
