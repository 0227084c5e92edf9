import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protocol_games.core import REJECT, Budget, SampleSource, rng_stream
from protocol_games.fhe import SealedFHE
from protocol_games.players import (
    BoostedLearner,
    ERMHalfplaneLearner,
    RejectronDefense,
    TransferableAttacker,
    UniquenessProver,
    WatermarkBuilder,
    attack_sizes,
    erm_dones,
    erm_halfplane,
    rejectron,
    smooth_classifier,
    watermark_verify_theft,
)
from protocol_games.players.defense import OracleFloodAttacker, defense_nash_wrapper
from protocol_games.players.learners import InconsistentSamples
from protocol_games.tasks import (
    ONE,
    ArcBand,
    HalfplaneHypothesis,
    circle_disagreement,
    circle_task,
    crypto_task,
    dones_task,
    to_fixed,
)


def _consistent_grid(x, y, pitch):
    """Boolean mask over grid w = k * pitch of halfplanes labelling (x, y) correctly."""
    ws = (np.arange(0, 1, pitch) * ONE).astype(np.int64)
    ok = np.array([np.array_equal(HalfplaneHypothesis(int(w)).predict(x), y) for w in ws])
    return ws, ok


class TestERMHalfplane:
    @pytest.mark.parametrize("seed", range(6))
    def test_consistent_and_central(self, seed):
        task = circle_task(int(rng_stream(seed, "w").integers(0, ONE)))
        x, y = task.sample(12, rng_stream(seed))
        h = erm_halfplane(x, y)
        assert np.array_equal(h.predict(x), y)
        # grid-scan oracle: ERM sits in the middle of the consistent arc
        pitch = 2e-4
        ws, ok = _consistent_grid(x, y, pitch)
        rel = ((ws - h.w) & (ONE - 1)) / ONE
        rel = np.where(rel > 0.5, rel - 1, rel)
        left, right = -rel[ok].min(), rel[ok].max()
        assert left > 0 and right > 0
        assert abs(left - right) <= 2 * pitch

    def test_inconsistent(self):
        x = np.array([0, 0], dtype=np.int64)
        with pytest.raises(InconsistentSamples):
            erm_halfplane(x, np.array([1, -1]))

    def test_empty_sample(self):
        assert erm_halfplane(np.array([], dtype=np.int64), np.array([])).w == 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, ONE - 1), st.integers(1, 200), st.integers(0, 2**31))
    def test_always_consistent(self, w, n, seed):
        task = circle_task(w)
        x, y = task.sample(n, rng_stream(seed))
        assert np.array_equal(erm_halfplane(x, y).predict(x), y)

    def test_risk_shrinks_with_samples(self):
        risks = {}
        for n in (20, 2000):
            r = []
            for s in range(40):
                task = circle_task(int(rng_stream(s, "w").integers(0, ONE)))
                f = ERMHalfplaneLearner(n).fit(SampleSource(task, rng_stream(s)))
                r.append(task.risk(f))
            risks[n] = np.mean(r)
        assert risks[2000] < risks[20] / 20


class TestSmoothingBoosting:
    def test_smoothing_keeps_halfplane(self):
        # a halfplane is its own majority vote over a symmetric window
        h = HalfplaneHypothesis(to_fixed(0.3))
        x = rng_stream(0).integers(0, ONE, 500, dtype=np.int64)
        assert np.mean(smooth_classifier(h, 0.05, 33).predict(x) != h.predict(x)) < 0.01

    def test_smoothing_validates(self):
        with pytest.raises(ValueError):
            smooth_classifier(HalfplaneHypothesis(0), 0.3)
        with pytest.raises(ValueError):
            smooth_classifier(HalfplaneHypothesis(0), 0.1, m=4)

    def test_boosting_sample_count(self):
        assert BoostedLearner(50, 0.05, ERMHalfplaneLearner(50)).n == 180
        assert BoostedLearner(500, 0.05, ERMHalfplaneLearner(500)).n == 500

    def test_boosting_consistent(self):
        task = circle_task(to_fixed(0.7))
        x, y = task.sample(200, rng_stream(4))
        g = BoostedLearner(10, 0.05, ERMHalfplaneLearner(10)).fit_samples(x, y)
        assert np.array_equal(g.predict(x), y)


class TestERMDOnes:
    def test_exactly_d_ones_and_consistent(self):
        task, h = dones_task(30, seed=1, N=3000)
        s = task.sample_summary(5000, rng_stream(1))
        f = erm_dones(s, rng_stream(2))
        assert len(f.positives) == 30
        assert np.all(f.predict(s.pos_unique) == 1)
        seen_neg = np.flatnonzero(s.avoid_mask(np.arange(3000)))
        seen_neg = seen_neg[~np.isin(seen_neg, s.pos_unique)]
        assert np.all(f.predict(seen_neg) == -1)

    def test_no_room_to_pad(self):
        task, _ = dones_task(5, seed=2, N=20)
        s = task.sample_summary(10**5, rng_stream(3))
        # every index is seen, so a d-ones fit exists only if all positives were drawn
        f = erm_dones(s, rng_stream(4))
        assert len(f.positives) == 5


class TestAttack:
    def test_sizes(self):
        assert attack_sizes(0.05) == (18000, 320)

    def test_queries_half_encrypted(self):
        task = crypto_task(128, to_fixed(0.4), SealedFHE(0))
        rng = rng_stream(5)
        out = TransferableAttacker(0.05, N=2000, q=320).attack(SampleSource(task, rng, Budget()), rng)
        assert len(out) == 320
        assert abs(np.mean(out.queries.flags) - 0.5) < 0.1
        assert np.array_equal(np.flatnonzero(out.queries.flags), out.trace["planted"])

    def test_band_points_near_learned_boundary(self):
        task = crypto_task(128, to_fixed(0.4), SealedFHE(1))
        rng = rng_stream(6)
        out = TransferableAttacker(0.05, N=2000, q=100).attack(SampleSource(task, rng, Budget()), rng)
        band = ArcBand.from_turns(out.trace["w_prime"], 1.01 * 0.05)
        assert band.contains(out.trace["band_points"]).all()

    def test_respects_sample_budget(self):
        from protocol_games.core import BudgetExceeded

        task = crypto_task(128, 0, SealedFHE(2))
        rng = rng_stream(7)
        with pytest.raises(BudgetExceeded):
            TransferableAttacker(0.05, N=2000, q=10).attack(SampleSource(task, rng, Budget(1999)), rng)


class TestRejectron:
    def test_honest_test_mostly_accepted(self):
        task = circle_task(to_fixed(0.2))
        x, y = task.sample(2000, rng_stream(0))
        test = task.sample_inputs(2000, rng_stream(1))
        sel = rejectron((x, y), test, 0.1)
        assert np.mean(sel.predict(test) == REJECT) < 0.1

    def test_flood_is_rejected(self):
        task = circle_task(to_fixed(0.2))
        d = RejectronDefense(0.1, n_train=200, eps_star=0.1)
        rng = rng_stream(2)
        s = d.publish(SampleSource(task, rng), rng)
        x = OracleFloodAttacker(500).attack(s.f, SampleSource(task, rng), rng, {"truth": task.h})
        b, info = d.detect(s, x)
        if circle_disagreement(s.f, task.h) > 0:
            assert b == 1 and info["rejection_rate"] > 0.5

    def test_never_relabels(self):
        task = circle_task(to_fixed(0.6))
        x, y = task.sample(300, rng_stream(3))
        test = rng_stream(4).integers(0, ONE, 400, dtype=np.int64)
        sel = rejectron((x, y), test, 0.2)
        out = sel.predict(test)
        keep = out != REJECT
        assert np.array_equal(out[keep], erm_halfplane(x, y).predict(test)[keep])

    def test_eps_star_range(self):
        with pytest.raises(ValueError):
            rejectron((np.zeros(1, dtype=np.int64), np.ones(1)), np.zeros(1, dtype=np.int64), 1.5)


class TestDefenseWrapper:
    def test_far_answers_flagged(self):
        f = HalfplaneHypothesis(0)
        x = rng_stream(0).integers(0, ONE, 100, dtype=np.int64)
        assert defense_nash_wrapper(f, x, lambda _f, _x: (-f.predict(_x), 0), 0.1) == 1
        assert defense_nash_wrapper(f, x, lambda _f, _x: (f.predict(_x), 0), 0.1) == 0
        assert defense_nash_wrapper(f, x, lambda _f, _x: (f.predict(_x), 1), 0.1) == 1


@pytest.fixture(scope="module")
def built():
    task, h = dones_task(20, seed=4, N=4000)
    rng = rng_stream(8)
    out = WatermarkBuilder(0.1, 8, 20000).build(SampleSource(task, rng), rng, planted=1)
    return task, h, out


class TestWatermark:
    def test_sizes_and_planting(self, built):
        task, h, out = built
        assert len(out.queries) == 8 and out.is_planted == 1
        assert np.all(h.predict(out.queries) == 1)
        assert np.all(out.f.predict(out.queries) == -1)

    def test_f_has_d_ones(self, built):
        task, h, out = built
        assert len(out.f.positives) == 20

    def test_f_true_positive_off_the_watermark(self, built):
        _, h, out = built
        assert np.array_equal(np.sort(out.queries), out.info["A_w"])
        # padding may land on unseen true positives, never below the kept ones
        agree = np.intersect1d(out.f.positives, h.positives)
        assert len(agree) >= out.info["n_positives"] - 8

    def test_fresh_branch(self):
        task, h = dones_task(20, seed=5, N=4000)
        rng = rng_stream(9)
        out = WatermarkBuilder(0.1, 8, 20000).build(SampleSource(task, rng), rng, planted=0)
        assert out.is_planted == 0 and len(out.queries) == 8

    def test_prover_with_full_view_recovers_planted(self, built):
        # at N = 4000 a 20000-draw prover sees every positive
        task, h, out = built
        rng = rng_stream(10)
        y = UniquenessProver(20000).answer(out.queries, SampleSource(task, rng), rng)
        assert task.empirical_error(out.queries, y) == 0.0

    def test_verify_theft(self):
        assert watermark_verify_theft([1, 1, -1, -1], [-1, -1, -1, 1]) == 1
        assert watermark_verify_theft([1, 1, -1, -1], [1, 1, -1, 1]) == 0
        with pytest.raises(ValueError):
            watermark_verify_theft([1], [1, 1])
