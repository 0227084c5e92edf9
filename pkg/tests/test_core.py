import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protocol_games.core import (
    REJECT,
    Budget,
    BudgetExceeded,
    ConfigError,
    ProtocolParams,
    SampleSource,
    SelectiveClassifier,
    Transcript,
    charge,
    empirical_error,
    estimate_risk,
    rejection_rate,
    rng_stream,
    trial_seed,
)
from protocol_games.tasks import HalfplaneHypothesis, circle_task, to_fixed


def _oracle(x, y):
    # ground truth: label +1 iff x is even; None on negatives
    if x < 0:
        return None
    return int((1 if x % 2 == 0 else -1) != y)


class TestEmpiricalError:
    def test_all_correct(self):
        assert empirical_error([0, 1, 2], [1, -1, 1], _oracle) == 0.0

    def test_one_wrong_in_four(self):
        assert empirical_error([0, 1, 2, 3], [1, -1, 1, 1], _oracle) == 0.25

    def test_undefined_counts_as_correct(self):
        assert empirical_error([-1, 2], [1, -1], _oracle) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_error([0, 1], [1], _oracle)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_error([], [], _oracle)


class TestRejectionRate:
    def test_half(self):
        assert rejection_rate([1, REJECT, -1, REJECT]) == 0.5

    def test_none_rejected(self):
        assert rejection_rate([1, -1]) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            rejection_rate([])


class TestBudget:
    def test_charge_accumulates(self):
        b = Budget(10, 100)
        charge(b, samples=4, ops=30)
        charge(b, samples=6)
        assert (b.used_samples, b.used_ops) == (10, 30)

    def test_overrun_raises_and_is_atomic(self):
        b = Budget(5, 5)
        with pytest.raises(BudgetExceeded):
            b.charge(samples=3, ops=6)
        assert (b.used_samples, b.used_ops) == (0, 0)

    def test_unlimited(self):
        b = Budget()
        b.charge(samples=10**12, ops=10**15)
        assert b.remaining_samples == float("inf")

    def test_fresh_and_scaled(self):
        b = Budget(10, 20)
        b.charge(samples=3)
        assert b.fresh().used_samples == 0
        assert b.scaled(100).max_samples == 1000

    def test_negative_limits_rejected(self):
        with pytest.raises(ConfigError):
            Budget(-1)

    @given(st.lists(st.integers(0, 7), max_size=30))
    def test_never_exceeds_limit(self, charges):
        b = Budget(20)
        for c in charges:
            try:
                b.charge(samples=c)
            except BudgetExceeded:
                pass
            assert b.used_samples <= 20


class TestProtocolParams:
    def test_valid(self):
        p = ProtocolParams(0.1, 10, c=0.9, s=0.5)
        assert p.to_dict()["q"] == 10

    @pytest.mark.parametrize("eps", [0.0, 0.5, -0.1, 0.7])
    def test_epsilon_range(self, eps):
        with pytest.raises(ConfigError):
            ProtocolParams(eps, 10)

    def test_s_below_c(self):
        with pytest.raises(ConfigError):
            ProtocolParams(0.1, 10, c=0.5, s=0.5)


class TestRng:
    def test_streams_are_reproducible(self):
        a = rng_stream(3, "x", 1).integers(0, 2**62, 5)
        b = rng_stream(3, "x", 1).integers(0, 2**62, 5)
        assert np.array_equal(a, b)

    def test_streams_differ_by_key(self):
        a = rng_stream(3, "x", 1).integers(0, 2**62)
        b = rng_stream(3, "x", 2).integers(0, 2**62)
        assert a != b

    def test_trial_seed_range(self):
        s = [trial_seed(0, t) for t in range(100)]
        assert len(set(s)) == 100
        assert all(0 <= v < 2**63 for v in s)


class TestSelectiveClassifier:
    def test_agrees_where_not_rejected(self):
        base = HalfplaneHypothesis(0)
        other = HalfplaneHypothesis(to_fixed(0.1))
        sel = SelectiveClassifier(base, [other])
        x = rng_stream(0).integers(0, 2**62, 500, dtype=np.int64)
        y = sel.predict(x)
        keep = y != REJECT
        assert np.array_equal(y[keep], base.predict(x)[keep])
        assert np.array_equal(~keep, base.predict(x) != other.predict(x))


class TestSampleSource:
    def test_draw_charges_samples(self):
        src = SampleSource(circle_task(0), rng_stream(1), Budget(10))
        src.draw(6)
        with pytest.raises(BudgetExceeded):
            src.draw_inputs(5)


class TestEstimateRisk:
    def test_perfect_classifier(self):
        task = circle_task(to_fixed(0.3))
        est, (lo, hi) = estimate_risk(task.h, task, 2000, rng_stream(0))
        assert est == 0.0 and lo == 0.0 and hi < 0.01

    def test_quarter_shift(self):
        # shifting the boundary by 1/8 turn disagrees on 1/4 of the circle
        task = circle_task(0)
        f = HalfplaneHypothesis(to_fixed(0.125))
        est, (lo, hi) = estimate_risk(f, task, 20000, rng_stream(1))
        assert lo <= 0.25 <= hi


class TestTranscript:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Transcript(np.zeros(3), np.zeros(2), None, 0.0, 1)

    def test_error_range(self):
        with pytest.raises(ValueError):
            Transcript(np.zeros(2), np.zeros(2), 0, 1.5, 1)
