"""Experiment kinds behind the CLI.  Each takes a validated config dict and
returns (verdict dict, transcript rows)."""
from __future__ import annotations

import dataclasses
import json
import math
from importlib import resources

import numpy as np

from . import efid as efid_mod
from . import gametheory as gt
from .core import Budget, ConfigError, ProtocolParams, rng_stream, trial_seed
from .fhe import SealedFHE
from .players import (
    BoostedLearner,
    ERMHalfplaneLearner,
    RejectronDefense,
    TransferableAttacker,
    UniquenessProver,
    WatermarkBuilder,
    erm_halfplane,
    make_strategy,
)
from .players.baselines import ERMDefender
from .players.watermark import default_builder_samples
from .protocols import PropertyResult, _row, fingerprint, rate_property, run_defense_game, run_transfattack_game, run_watermark_game
from .stats import chernoff_lower, chernoff_two_sided, chernoff_upper, wilson_interval
from .tasks import ONE, ArcBand, CirclePoint, band_error, circle_task, crypto_task, dones_task

KINDS = ("watermark", "defense", "transfattack", "trichotomy", "efid", "lowerbound", "chernoff-audit")


# ---------------------------------------------------------------------------
# Config helpers


def load_calibration() -> dict:
    return json.loads(resources.files("protocol_games").joinpath("data/calibration.json").read_text())


def calibrated_samples(eps: float, kappa: float | None = None) -> int:
    """Defender sample budget kappa / eps^2."""
    k = load_calibration()["kappa"] if kappa is None else kappa
    return max(0, int(round(k / eps**2)))


def _budget(d) -> Budget:
    if isinstance(d, Budget):
        return d
    return Budget.from_dict(d)


def make_params(cfg: dict) -> ProtocolParams:
    p = dict(cfg["params"])
    p["attacker_budget"] = _budget(p.get("attacker_budget"))
    p["defender_budget"] = _budget(p.get("defender_budget"))
    return ProtocolParams(**p)


def _random_w(seed: int) -> int:
    return int(rng_stream(seed, "w").integers(0, ONE, dtype=np.int64))


def task_factory(task_cfg: dict):
    fam = task_cfg["family"]
    fixed = task_cfg.get("w")
    w_of = (lambda s: CirclePoint.from_hex(fixed).theta) if fixed else _random_w
    if fam == "circle":
        return lambda s: circle_task(w_of(s))
    if fam == "crypto":
        lam = int(task_cfg.get("lambda", 128))
        return lambda s: crypto_task(lam, w_of(s), SealedFHE(s))
    if fam == "dones":
        d, N = int(task_cfg["d"]), task_cfg.get("N")
        return lambda s: dones_task(d, s, None if N is None else int(N))[0]
    raise ConfigError(f"unknown task family {fam!r}")


def _ctx(params: ProtocolParams, **extra) -> dict:
    ctx = {
        "attacker_samples": params.attacker_budget.max_samples,
        "defender_samples": params.defender_budget.max_samples,
        "epsilon": params.epsilon,
        "q": params.q,
    }
    ctx.update(extra)
    return ctx


def _suite(cfg: dict, key: str, ctx: dict) -> list:
    try:
        return [make_strategy(s, ctx) for s in cfg.get("suites", {}).get(key, [])]
    except KeyError as e:
        raise ConfigError(e.args[0]) from None
    except TypeError as e:
        raise ConfigError(f"bad strategy parameters in suites.{key}: {e}") from None


def _verdict(kind, props: dict, params: dict, fp: str, extras: dict | None = None) -> dict:
    return {
        "kind": kind,
        "passed": all(p.passed for p in props.values()),
        "properties": {k: v.to_dict() for k, v in props.items()},
        "params": params,
        "suite_fingerprint": fp,
        "extras": extras or {},
    }


def _value_property(estimate: float, threshold: float, relation: str, trials: int, ci=None, detail=None) -> PropertyResult:
    ci = (estimate, estimate) if ci is None else ci
    return PropertyResult(float(estimate), (float(ci[0]), float(ci[1])), float(threshold), relation, int(trials), detail or {})


# ---------------------------------------------------------------------------
# Protocol games


def run_watermark(cfg: dict, threads: int = 1):
    params = make_params(cfg)
    opts = cfg.get("options", {})
    tc = cfg["task"]
    d = int(tc["d"])
    N = int(tc.get("N", 100 * d * d))
    eps, q = params.epsilon, params.q
    builder = WatermarkBuilder(eps, q, opts.get("builder_samples") or default_builder_samples(d, q))
    prover = UniquenessProver(opts.get("prover_samples") or math.ceil(10 * d / eps))
    ctx = _ctx(params)
    thr = opts.get("f_error_threshold")
    if thr is None:
        thr = eps + q / N if opts.get("correctness_slack", True) else eps
    v = run_watermark_game(
        builder, _suite(cfg, "adversaries", ctx), prover, params, cfg["trials"], task_factory(tc),
        _suite(cfg, "distinguishers", ctx), seed=cfg["seed"], threads=threads,
        f_error_threshold=thr, tolerances=opts.get("tolerances"),
    )
    return v.to_dict(), v.transcripts


def run_defense(cfg: dict, threads: int = 1):
    params = make_params(cfg)
    opts = cfg.get("options", {})
    defender = RejectronDefense(params.epsilon, opts.get("n_train"), opts.get("eps_star"), threshold_factor=opts.get("threshold_factor", 2 / 3))
    ctx = _ctx(params)
    v = run_defense_game(defender, _suite(cfg, "attackers", ctx), params, cfg["trials"], task_factory(cfg["task"]), seed=cfg["seed"], threads=threads)
    out = v.to_dict()
    out["extras"].update({"n_train": defender.n_train, "eps_star": defender.eps_star, "detection_threshold": defender.threshold})
    return out, v.transcripts


def _defender_samples(params: ProtocolParams, opts: dict) -> int:
    t = opts.get("defender_samples", "calibrated")
    if t == "calibrated":
        return calibrated_samples(params.epsilon, opts.get("kappa"))
    return int(t)


def run_transfattack(cfg: dict, threads: int = 1):
    params = make_params(cfg)
    opts = cfg.get("options", {})
    eps, q = params.epsilon, params.q
    t = _defender_samples(params, opts)
    params = dataclasses.replace(params, defender_budget=Budget(t, params.defender_budget.max_ops))
    attacker = TransferableAttacker(eps, opts.get("attacker_samples"), q)
    ctx = _ctx(params)
    factory = task_factory(cfg["task"])
    dist_budget = _budget(opts["distinguisher_budget"]) if "distinguisher_budget" in opts else None
    v = run_transfattack_game(
        attacker, _suite(cfg, "defenders", ctx), params, cfg["trials"], factory,
        _suite(cfg, "distinguishers", ctx), opts.get("indist_trials"), seed=cfg["seed"], threads=threads,
        adv_threshold=opts.get("adv_threshold"), distinguisher_budget=dist_budget,
    )
    out = v.to_dict()
    out["extras"]["defender_samples"] = t
    rows = list(v.transcripts)
    factor = opts.get("companion_factor")
    if factor:
        big = int(round(t * factor)) if t else int(factor)
        p2 = dataclasses.replace(params, defender_budget=Budget(big, params.defender_budget.max_ops))
        v2 = run_transfattack_game(attacker, [ERMDefender(big)], p2, opts.get("companion_trials", cfg["trials"]), factory,
                                   seed=int(rng_stream(cfg["seed"], "companion").integers(0, 2**62)), threads=threads)
        tm = v2.properties["transferability_min"]
        comp = PropertyResult(tm.estimate, tm.ci, opts.get("companion_threshold", 0.5), "<", tm.trials, {"defender_samples": big})
        out["properties"]["companion_transferability"] = comp.to_dict()
        out["passed"] = out["passed"] and comp.passed
        for r in v2.transcripts:
            rows.append({**r, "strategy": f"companion:{r['strategy']}"})
    return out, rows


# ---------------------------------------------------------------------------
# EFID


def run_efid(cfg: dict, threads: int = 1):
    params = make_params(cfg)
    opts = cfg.get("options", {})
    eps, q = params.epsilon, params.q
    attacker = TransferableAttacker(eps, opts.get("attacker_samples"), q)
    factory = task_factory(cfg["task"])
    ctx = _ctx(params)
    suite = _suite(cfg, "distinguishers", ctx)
    t_prime = _budget(opts.get("distinguisher_budget", params.defender_budget.to_dict()))
    learners = opts.get("learner_samples", ["calibrated"])
    z = float(opts.get("z", 3.0))
    props, extras = {}, {"learners": {}}
    for i, n in enumerate(learners):
        n = calibrated_samples(eps, opts.get("kappa")) if n == "calibrated" else int(n)
        pair = efid_mod.build_efid(attacker, factory, eps, q, T=params.attacker_budget, T_prime=t_prime)
        rep = efid_mod.verify_efid(pair, ERMDefender(n), cfg["trials"], seed=int(rng_stream(cfg["seed"], "efid", i).integers(0, 2**62)),
                                   suite=suite, calib_trials=opts.get("calib_trials"))
        extras["learners"][f"t={n}"] = rep
        bound = rep["eta_target"] - z * rep["tv_stderr"]
        props[f"tv_lower[t={n}]"] = _value_property(rep["tv_lower_estimate"], bound, ">=", rep["trials"], rep["tv_interval"],
                                                     {"eta_target": rep["eta_target"], "p_hat": rep["p_hat"], "c_hat": rep["c_hat"]})
        excess = {}
        for name, a in rep["indistinguishability_advantages"].items():
            se = math.sqrt(max((a["advantage"] + 0.5) * (0.5 - a["advantage"]), 1e-12) / a["trials"])
            excess[name] = abs(a["advantage"]) / se
        worst = max(excess, key=excess.get) if excess else None
        if worst is not None:
            props[f"bounded_advantage_z[t={n}]"] = _value_property(excess[worst], z, "<=", rep["trials"], None,
                                                                   {k: round(v, 12) for k, v in excess.items()} | {"_worst": worst})
    return _verdict("efid", props, params.to_dict(), fingerprint([attacker, *suite]), extras), []


# ---------------------------------------------------------------------------
# Trichotomy


def run_trichotomy(cfg: dict, threads: int = 1):
    params = make_params(cfg)
    opts = cfg.get("options", {})
    tc = cfg["task"]
    d = int(tc["d"])
    N = int(tc.get("N", 100 * d * d))
    eps, q = params.epsilon, params.q
    factory = task_factory(tc)
    pac = opts.get("learner_samples") or 20 * N
    builder = WatermarkBuilder(eps, q, opts.get("builder_samples") or default_builder_samples(d, q))
    rows = [gt.HonestRow(pac, q), gt.WatermarkRow(builder), gt.ConstantClassifierRow(1, q)]
    cols = [gt.EchoColumn("never"), gt.EchoColumn("coin"), gt.EchoColumn("always"), gt.FreshLearnerColumn(opts.get("column_learner_samples") or pac)]
    if opts.get("wrap_columns", False):
        cols = [gt.WrappedColumn(c, eps) for c in cols]
    seed = cfg["seed"]
    M = gt.estimate_matrix(rows, cols, factory, eps, q, cfg["trials"], seed)
    sol = gt.solve_nash(M)
    lo, hi = gt.pure_bounds(M)
    eta = float(opts.get("eta", 0.1))
    sp_r = gt.sparsify(M, sol.row_strategy, eta, "row", rng_stream(seed, "sparsify", "row"), value=sol.value)
    sp_c = gt.sparsify(M, sol.column_strategy, eta, "column", rng_stream(seed, "sparsify", "col"), value=sol.value)
    _, _, pay_r = gt.sparse_guarantee(M.entries, sp_r.distribution(M.shape[0]), sol.value, eta, "row")
    _, _, pay_c = gt.sparse_guarantee(M.entries, sp_c.distribution(M.shape[1]), sol.value, eta, "column")
    spread = float(M.entries.max() - M.entries.min())
    prover = UniquenessProver(opts.get("prover_samples") or pac)
    u_trials = opts.get("uniqueness_trials", cfg["trials"])
    u_rate, u_wins = gt.uniqueness_rate(rows, sol.row_strategy, prover, factory, eps, u_trials, int(rng_stream(seed, "uniq").integers(0, 2**62)))
    holds = u_rate >= params.c
    label = gt.classify_trichotomy(min(1.0, max(0.0, sol.value)), holds)
    props = {
        "nash_dual_gap": _value_property(abs(sol.value - sol.dual_value), 1e-6, "<=", cfg["trials"]),
        "nash_within_pure_bounds": _value_property(max(lo - sol.value, sol.value - hi), 1e-9, "<=", cfg["trials"], None, {"maximin": lo, "minimax": hi}),
        "sparse_row_slack": _value_property(pay_r - (sol.value + eta * spread), 1e-12, "<=", sp_r.k),
        "sparse_column_slack": _value_property((sol.value - eta * spread) - pay_c, 1e-12, "<=", sp_c.k),
    }
    expected = opts.get("expected_class")
    if expected is not None:
        props["classification_matches"] = _value_property(float(label == expected), 1.0, ">=", 1, None, {"expected": expected, "got": label})
    extras = {
        "matrix": M.to_dict(),
        "nash": sol.to_dict(),
        "threshold": gt.THRESHOLD,
        "sparse_row": {"indices": sp_r.indices, "k": sp_r.k},
        "sparse_column": {"indices": sp_c.indices, "k": sp_c.k},
        "uniqueness_rate": u_rate,
        "uniqueness_ci": list(wilson_interval(u_wins, u_trials)),
        "uniqueness_holds": holds,
        "classification": label,
    }
    return _verdict("trichotomy", props, params.to_dict(), fingerprint([*rows, *cols, prover]), extras), []


# ---------------------------------------------------------------------------
# Learning lower bound and boosting on the circle


def run_lowerbound(cfg: dict, threads: int = 1):
    opts = cfg.get("options", {})
    seed, trials = cfg["seed"], cfg["trials"]
    props, extras, rows = {}, {}, []
    for K in opts.get("K", [50, 200]):
        K = int(K)
        hits = 0
        for t in range(trials):
            r = rng_stream(seed, "lowerbound", K, t)
            task = circle_task(int(r.integers(0, ONE, dtype=np.int64)))
            x, y = task.sample(K, r)
            risk = task.risk(erm_halfplane(x, y))
            hits += risk <= 1 / (2 * K)
            if t < opts.get("transcript_rows", 0):
                rows.append(_row(t, f"erm-{K}", risk, None, trial_seed(seed, t)))
        props[f"lowerbound[K={K}]"] = rate_property(hits, trials, opts.get("lowerbound_threshold", 0.05), "<=")
    boost = opts.get("boosting")
    if boost:
        eta, K, bt = float(boost.get("eta", 0.05)), int(boost.get("K", 20)), int(boost.get("trials", 200))
        learner = BoostedLearner(K, eta, ERMHalfplaneLearner(K))
        risks, nus = np.empty(bt), np.empty(bt)
        for t in range(bt):
            r = rng_stream(seed, "boosting", t)
            task = circle_task(int(r.integers(0, ONE, dtype=np.int64)))
            x, y = task.sample(learner.n, r)
            fp = learner.fit_samples(x, y)
            risks[t] = task.risk(fp)
            nus[t] = band_error(fp.base, task.h, ArcBand(task.w, int(round(eta * ONE))))
        se = float(risks.std(ddof=1) / math.sqrt(bt))
        bound = 4 * eta * float(nus.mean())
        props["boosted_risk"] = _value_property(float(risks.mean()), bound + 3 * se, "<=", bt, (float(risks.mean()) - 1.96 * se, float(risks.mean()) + 1.96 * se),
                                                {"nu_hat": float(nus.mean()), "four_eta_nu": bound, "stderr": se, "samples": learner.n})
        extras["boosting"] = {"eta": eta, "K": K, "samples": learner.n}
    return _verdict("lowerbound", props, {"trials": trials}, fingerprint([]), extras), rows


# ---------------------------------------------------------------------------
# Chernoff audit


def run_chernoff_audit(cfg: dict, threads: int = 1):
    opts = cfg.get("options", {})
    devs = opts.get("deviations", [0.1, 0.3, 0.5])
    ks = opts.get("k", [10, 50, 200])
    ps = opts.get("p", [0.1, 0.3, 0.5])
    sims = cfg["trials"]
    z = float(opts.get("z", 3.0))
    detail, worst = {}, (-math.inf, None)
    for a in devs:
        for k in ks:
            for p in ps:
                cnt = rng_stream(cfg["seed"], "chernoff", a, k, p).binomial(k, p, sims)
                tol = 1e-9
                freqs = {
                    "two_sided": (np.mean(np.abs(cnt - p * k) > a * k + tol), chernoff_two_sided(a, k)),
                    "lower": (np.mean(cnt <= (1 - a) * p * k + tol), chernoff_lower(a, k, p)),
                    "upper": (np.mean(cnt > (1 + a) * p * k + tol), chernoff_upper(a, k, p)),
                }
                for name, (fr, bound) in freqs.items():
                    fr = float(fr)
                    se = math.sqrt(max(fr * (1 - fr), 1.0 / sims) / sims)
                    zval = (fr - bound) / se
                    key = f"{name}|dev={a}|k={k}|p={p}"
                    detail[key] = {"frequency": fr, "bound": bound, "z": round(zval, 9)}
                    if zval > worst[0]:
                        worst = (zval, key)
    prop = _value_property(worst[0], z, "<=", sims, None, {"_worst": worst[1], "checks": len(detail)})
    return _verdict("chernoff-audit", {"max_excess_z": prop}, {"simulations": sims}, fingerprint([]), {"grid": detail}), []


RUNNERS = {
    "watermark": run_watermark,
    "defense": run_defense,
    "transfattack": run_transfattack,
    "trichotomy": run_trichotomy,
    "efid": run_efid,
    "lowerbound": run_lowerbound,
    "chernoff-audit": run_chernoff_audit,
}


def run_experiment(cfg: dict, threads: int = 1):
    kind = cfg["kind"]
    if kind not in RUNNERS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    verdict, rows = RUNNERS[kind](cfg, threads)
    verdict["seed"] = cfg["seed"]
    verdict["trials"] = cfg["trials"]
    return verdict, rows


# ---------------------------------------------------------------------------
# Calibration of the defender budget


def calibration_sweep(eps: float = 0.05, q: int | None = None, N: int | None = None, budgets=(0, 1, 2, 4, 8, 16, 40), trials: int = 200, seed: int = 0, lam: int = 128) -> list[dict]:
    """Transferability of the attack against ERM defenders with t samples."""
    from .protocols import run_transfattack_game

    attacker = TransferableAttacker(eps, N, q)
    factory = task_factory({"family": "crypto", "lambda": lam})
    out = []
    for t in budgets:
        params = ProtocolParams(eps, attacker.q, defender_budget=Budget(t), l=0.9, c=0.9, s=0.0)
        v = run_transfattack_game(attacker, [ERMDefender(t)], params, trials, factory, seed=seed)
        out.append({"t": int(t), "transferability": round(v.properties["transferability_min"].estimate, 4)})
    return out


def choose_kappa(sweep: list[dict], eps: float, target: float = 0.9, margin: float = 0.03) -> float:
    """Largest swept budget whose transferability clears target + margin."""
    ok = [row["t"] for row in sweep if row["transferability"] >= target + margin]
    if not ok:
        raise ValueError("no budget reaches the target")
    return round(max(ok) * eps**2, 12)
