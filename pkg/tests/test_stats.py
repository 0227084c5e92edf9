import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from protocol_games.core import Budget
from protocol_games.stats import (
    chernoff_lower,
    chernoff_two_sided,
    chernoff_upper,
    run_indistinguishability_game,
    run_indistinguishability_suite,
    tv_lower_bound,
    wilson_interval,
)


class TestChernoff:
    def test_two_sided_value(self):
        assert chernoff_two_sided(0.1, 200) == pytest.approx(2 * math.exp(-1.0))

    def test_lower_value(self):
        assert chernoff_lower(0.5, 40, 0.5) == pytest.approx(math.exp(-2.5))

    def test_upper_value(self):
        assert chernoff_upper(1.0, 30, 0.2) == pytest.approx(math.exp(-2.0))

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_two_sided_range(self, eps):
        with pytest.raises(ValueError):
            chernoff_two_sided(eps, 10)

    def test_upper_needs_positive_delta(self):
        with pytest.raises(ValueError):
            chernoff_upper(0.0, 10, 0.5)

    def test_lower_needs_valid_p(self):
        with pytest.raises(ValueError):
            chernoff_lower(0.2, 10, 0.0)

    @given(st.floats(0.01, 0.99), st.integers(1, 10_000))
    def test_two_sided_monotone_in_k(self, eps, k):
        assert chernoff_two_sided(eps, k + 1) <= chernoff_two_sided(eps, k)

    def test_simulated_tail_below_bound(self):
        # 27 x 3 grid is covered by the audit experiment; spot check here
        rng = np.random.default_rng(0)
        k, p, eps = 50, 0.3, 0.3
        m = rng.binomial(k, p, 100_000) / k
        assert np.mean(np.abs(m - p) > eps) <= chernoff_two_sided(eps, k)
        assert np.mean(m <= (1 - eps) * p) <= chernoff_lower(eps, k, p) + 3 * math.sqrt(0.25 / 100_000)


class TestWilson:
    def test_contains_estimate(self):
        lo, hi = wilson_interval(30, 100)
        assert lo < 0.3 < hi

    def test_extremes_clipped(self):
        assert wilson_interval(0, 50)[0] == 0.0
        assert wilson_interval(50, 50)[1] == 1.0

    @given(st.integers(1, 500), st.data())
    def test_within_unit_interval(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(k, n)
        assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_bad_n(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


def _uniform(rng):
    return rng.random()


def _skewed(rng):
    return rng.random() ** 2


class TestIndistinguishability:
    def test_identical_samplers(self):
        est = run_indistinguishability_game(_uniform, _uniform, lambda x, rng, b: int(x < 0.5), 4000, seed=1)
        assert est.interval[0] <= 0.0 <= est.interval[1]

    def test_threshold_distinguisher(self):
        # P[U^2 < 1/4] = 1/2 vs P[U < 1/4] = 1/4: advantage 1/8
        est = run_indistinguishability_game(_uniform, _skewed, lambda x, rng, b: int(x < 0.25), 20000, seed=2)
        assert est.interval[0] <= 0.125 <= est.interval[1]

    def test_tv_lower_bound(self):
        # TV(U, U^2) = max_t (sqrt(t) - t) = 1/4 at t = 1/4
        tv = tv_lower_bound(_uniform, _skewed, lambda x, rng, b: int(x < 0.25), 20000, seed=3)
        assert tv == pytest.approx(0.25, abs=0.03)

    def test_over_budget_loses(self):
        def greedy(x, rng, budget):
            budget.charge(samples=5)
            return int(x < 0.25)

        est = run_indistinguishability_game(_uniform, _skewed, greedy, 500, seed=4, budget=Budget(1))
        assert est.wins == 0

    def test_suite_shares_challenge(self):
        suite = {"a": lambda x, r, b: int(x < 0.25), "b": lambda x, r, b: int(x < 0.25)}
        out = run_indistinguishability_suite(_uniform, _skewed, suite, 1000, seed=5)
        assert out["a"].wins == out["b"].wins

    def test_zero_trials(self):
        with pytest.raises(ValueError):
            run_indistinguishability_game(_uniform, _uniform, lambda x, r, b: 0, 0)
