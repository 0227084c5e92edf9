import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protocol_games.core import rng_stream
from protocol_games.fhe import SealedFHE
from protocol_games.tasks import (
    ONE,
    QUARTER,
    ArcBand,
    CirclePoint,
    HalfplaneHypothesis,
    band_error,
    band_sampler,
    circle_disagreement,
    circle_task,
    crypto_task,
    dones_task,
    task_from_descriptor,
    to_fixed,
)


class TestCircle:
    def test_sampler_labels_are_consistent(self):
        task = circle_task(to_fixed(0.2))
        x, y = task.sample(1000, rng_stream(0))
        assert task.empirical_error(x, y) == 0.0

    def test_sampler_reproducible(self):
        task = circle_task(to_fixed(0.2))
        a = task.sample(10, rng_stream(5))[0]
        b = task.sample(10, rng_stream(5))[0]
        assert np.array_equal(a, b)

    def test_labels_half_positive(self):
        h = HalfplaneHypothesis(0)
        grid = np.arange(0, ONE, ONE // 1024, dtype=np.int64)
        assert np.mean(h.predict(grid) == 1) == pytest.approx(0.5, abs=1e-2)

    @given(st.floats(0, 0.5))
    def test_disagreement_is_twice_the_shift(self, s):
        f, g = HalfplaneHypothesis(0), HalfplaneHypothesis(to_fixed(s))
        assert circle_disagreement(f, g) == pytest.approx(2 * s, abs=1e-12)

    def test_risk_is_exact(self):
        task = circle_task(to_fixed(0.9))
        assert task.risk(HalfplaneHypothesis(to_fixed(0.95))) == pytest.approx(0.1)

    def test_point_hex_roundtrip(self):
        p = CirclePoint.from_turns(0.37)
        assert CirclePoint.from_hex(p.hex()) == p


class TestBand:
    def test_measure(self):
        assert ArcBand.from_turns(0, 0.05).measure == pytest.approx(0.2)

    def test_sampler_stays_in_band(self):
        band = ArcBand.from_turns(to_fixed(0.4), 0.03)
        x = band_sampler(band)(rng_stream(1), 5000)
        assert band.contains(x).all()

    def test_sampler_covers_both_arcs(self):
        band = ArcBand.from_turns(0, 0.05)
        x = band_sampler(band)(rng_stream(2), 4000)
        c1, _ = band.centres()
        near1 = np.mean(((x - c1) & (ONE - 1)) < band.alpha + 1) + np.mean(((c1 - x) & (ONE - 1)) < band.alpha + 1)
        assert 0.45 < near1 < 0.56

    def test_quarter_rejected(self):
        with pytest.raises(ValueError):
            ArcBand.from_turns(0, 0.25)

    def test_band_error_of_shift(self):
        # shift 0.02 inside a 0.05 band: 0.04 of disagreement over 0.2 of band
        band = ArcBand.from_turns(0, 0.05)
        f, h = HalfplaneHypothesis(to_fixed(0.02)), HalfplaneHypothesis(0)
        assert band_error(f, h, band) == pytest.approx(0.2, abs=1e-9)


class TestDOnes:
    def test_exactly_d_ones(self):
        task, h = dones_task(50, seed=3)
        assert h.d == 50 and task.N == 100 * 50 * 50

    def test_summary_matches_explicit_sample(self):
        task, h = dones_task(20, seed=1, N=1000)
        s = task.sample_summary(5000, rng_stream(2))
        assert np.all(h.predict(s.pos_unique) == 1)

    def test_lazy_summary_counts(self):
        task, h = dones_task(1000, seed=2)
        s = task.sample_summary(10**8, rng_stream(3))
        # expected positives n d / N = 1e8 / 1e5 = 1000 draws
        assert s.n == 10**8
        assert len(s.pos_unique) <= 1000

    def test_risk_symmetric_difference(self):
        from protocol_games.tasks import DOnesHypothesis

        task, h = dones_task(10, seed=0, N=100)
        g = DOnesHypothesis(list(h.positives[:9]) + [int(np.setdiff1d(np.arange(100), h.positives)[0])], 100)
        assert task.risk(g) == pytest.approx(2 / 100)


class TestCrypto:
    def test_honest_labels_have_zero_error(self):
        task = crypto_task(128, to_fixed(0.6), SealedFHE(0))
        x, y = task.sample(400, rng_stream(0))
        assert task.empirical_error(x, y) == 0.0

    def test_flag_fraction_half(self):
        task = crypto_task(128, 0, SealedFHE(1))
        x = task.sample_inputs(4000, rng_stream(1))
        assert abs(np.mean(x.flags) - 0.5) < 0.03

    def test_clear_answer_on_encrypted_slot_is_error(self):
        task = crypto_task(128, 0, SealedFHE(2))
        x = task.sample_inputs(200, rng_stream(2))
        enc = np.flatnonzero(x.flags)[0]
        assert task.error_oracle(x[enc], 1) == 1

    def test_descriptor_roundtrip(self):
        task = crypto_task(128, to_fixed(0.25), SealedFHE(3))
        t2 = task_from_descriptor(task.descriptor(), seed=3)
        assert t2.w == task.w
