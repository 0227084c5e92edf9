import math
from types import SimpleNamespace

import numpy as np
import pytest

from protocol_games.core import Budget
from protocol_games.efid import (
    OracleFreeSource,
    build_efid,
    efid_distinguish,
    efid_holds,
    eta_target,
    mixture_pair,
    verify_efid,
)
from protocol_games.players.learners import ERMHalfplaneLearner
from protocol_games.core import rng_stream
from protocol_games.tasks import ArcBand, band_sampler, circle_task, to_fixed

EPS, Q = 0.1, 40


def _factory(seed):
    return circle_task(int(rng_stream(seed, "w").integers(0, 2**62)))


class HonestAttack:
    name = "honest"

    def attack(self, source, rng):
        return SimpleNamespace(queries=source.draw_inputs(Q))


class BandAttack:
    """Queries packed next to the true boundary; test-only, reads the task."""

    name = "band"

    def attack(self, source, rng):
        band = ArcBand.from_turns(source.task.h.w, 0.01)
        return SimpleNamespace(queries=band_sampler(band)(rng, Q))


class CircleLearner:
    def __init__(self, n):
        self.erm = ERMHalfplaneLearner(n)

    def learn(self, source):
        return self.erm.fit(source)

    def answer(self, x, source, rng):
        return self.learn(source).predict(x)


class TruthLearner:
    def answer(self, x, source, rng):
        return source.task.h.predict(x)

    def learn(self, source):
        return source.task.h


class TestEtaTarget:
    def test_measured_example(self):
        # p = 0.99, c = 0.9, eps q = 16
        assert eta_target(0.99, 0.9, 0.05, 320) == pytest.approx(0.5 * (0.89 - math.exp(-16 / 3)))
        assert eta_target(0.99, 0.9, 0.05, 320) == pytest.approx(0.443, abs=1e-3)

    def test_honest_degenerate(self):
        assert eta_target(1.0, 0.0, 0.05, 320) <= 0


class TestDistinguish:
    def test_truth_learner_never_flags_honest(self):
        task = _factory(0)
        for t in range(20):
            x = task.sample_inputs(Q, rng_stream(1, t))
            assert efid_distinguish(TruthLearner(), EPS, x, task, rng_stream(2, t)) == 0

    def test_budget_exhaustion_outputs_zero(self):
        task = _factory(0)
        x = task.sample_inputs(Q, rng_stream(3))
        assert efid_distinguish(CircleLearner(500), EPS, x, task, rng_stream(4), Budget(10)) == 0

    def test_oracle_free_source_hides_task(self):
        from protocol_games.core import SampleSource

        src = OracleFreeSource(SampleSource(_factory(0), rng_stream(0)))
        assert not hasattr(src, "task")
        with pytest.raises(AttributeError):
            src.extra = 1


class TestBuild:
    def test_sampler_length(self):
        pair = build_efid(HonestAttack(), _factory, EPS, Q)
        assert len(pair.d0(rng_stream(0))[1]) == Q
        assert len(pair.d1(rng_stream(1))[1]) == Q

    def test_wrong_length_rejected(self):
        class Short:
            def attack(self, source, rng):
                return SimpleNamespace(queries=source.draw_inputs(Q - 1))

        pair = build_efid(Short(), _factory, EPS, Q)
        with pytest.raises(ValueError):
            pair.d1(rng_stream(0))


class TestVerify:
    def test_identical_samplers(self):
        pair = build_efid(HonestAttack(), _factory, EPS, Q)
        rep = verify_efid(pair, CircleLearner(20), 600, seed=1, calib_trials=200)
        assert rep["tv_lower_estimate"] <= 3 * rep["tv_stderr"] + 1e-12
        assert 0.0 <= rep["tv_lower_estimate"] <= 1.0

    def test_band_attack_meets_target(self):
        pair = build_efid(BandAttack(), _factory, EPS, Q)
        rep = verify_efid(pair, CircleLearner(20), 600, seed=2, calib_trials=300)
        assert rep["c_hat"] > 0.5
        assert efid_holds(rep)

    def test_mixture_monotone(self):
        pair = build_efid(BandAttack(), _factory, EPS, Q)
        tv = []
        for lam in (0.0, 0.5, 1.0):
            rep = verify_efid(mixture_pair(pair, lam), CircleLearner(20), 600, seed=3, calib_trials=50)
            tv.append((rep["tv_lower_estimate"], rep["tv_stderr"]))
        for (a, sa), (b, sb) in zip(tv, tv[1:]):
            assert b <= a + 3 * math.hypot(sa, sb)
        assert tv[-1][0] <= 3 * tv[-1][1] + 1e-12
