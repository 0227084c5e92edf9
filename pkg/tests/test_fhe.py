import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protocol_games.core import Budget, BudgetExceeded
from protocol_games.fhe import (
    GATE_OPS,
    CircuitBuilder,
    CircuitDescription,
    FHEError,
    SealedFHE,
    add_constant_circuit,
    halfplane_circuit,
    identity_circuit,
    xor_circuit,
)
from protocol_games.tasks import HalfplaneHypothesis, ONE, to_fixed


@pytest.fixture
def fhe():
    backend = SealedFHE(7)
    return backend, backend.keygen(128)


class TestRoundTrip:
    @pytest.mark.parametrize("m,bits", [(0, 1), (1, 1), (5, 3), (2**61 + 17, 62)])
    def test_decrypt_encrypt(self, fhe, m, bits):
        backend, kp = fhe
        assert backend.decrypt(kp.sk, backend.encrypt(kp.pk, m, bits)) == m

    def test_wrong_key_gives_undefined(self, fhe):
        backend, kp = fhe
        other = backend.keygen(128)
        ct = backend.encrypt(kp.pk, 1)
        assert backend.decrypt(other.sk, ct) is None

    def test_message_too_wide(self, fhe):
        backend, kp = fhe
        with pytest.raises(ValueError):
            backend.encrypt(kp.pk, 4, 2)

    def test_encryption_is_randomized(self, fhe):
        backend, kp = fhe
        a, b = backend.encrypt(kp.pk, 1), backend.encrypt(kp.pk, 1)
        assert a.handle != b.handle

    def test_secret_key_repr_is_sealed(self, fhe):
        _, kp = fhe
        assert kp.sk.token.hex() not in repr(kp.sk)


class TestEval:
    def test_xor(self, fhe):
        backend, kp = fhe
        for a in (0, 1):
            for b in (0, 1):
                ct = backend.eval(kp.pk, xor_circuit(), [backend.encrypt(kp.pk, a), backend.encrypt(kp.pk, b)])
                assert backend.decrypt(kp.sk, ct) == a ^ b

    def test_identity(self, fhe):
        backend, kp = fhe
        ct = backend.eval(kp.pk, identity_circuit(8), [backend.encrypt(kp.pk, 201, 8)])
        assert backend.decrypt(kp.sk, ct) == 201

    def test_eval_charges_per_gate(self, fhe):
        backend, kp = fhe
        b = Budget(max_ops=GATE_OPS - 1)
        cts = [backend.encrypt(kp.pk, 1), backend.encrypt(kp.pk, 0)]
        with pytest.raises(BudgetExceeded):
            backend.eval(kp.pk, xor_circuit(), cts, b)

    def test_arity_mismatch(self, fhe):
        backend, kp = fhe
        with pytest.raises(FHEError):
            backend.eval(kp.pk, xor_circuit(), [backend.encrypt(kp.pk, 1)])

    def test_forged_handle(self, fhe):
        from protocol_games.fhe import Ciphertext

        backend, kp = fhe
        with pytest.raises(FHEError):
            backend.eval(kp.pk, identity_circuit(1), [Ciphertext(b"\x00" * 16, 1)])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
    def test_add_constant_matches_python(self, x, k):
        assert add_constant_circuit(k, 16).evaluate(x) == (x + k) % 2**16


class TestHalfplaneCircuit:
    def test_matches_plain_labels(self):
        rng = np.random.default_rng(3)
        w = int(rng.integers(0, ONE))
        c = halfplane_circuit(w)
        h = HalfplaneHypothesis(w)
        x = rng.integers(0, ONE, 300, dtype=np.int64)
        plain = (h.predict(x) == 1).astype(int)
        assert [c.evaluate(int(v)) for v in x] == plain.tolist()

    def test_boundary_points_negative(self):
        w = to_fixed(0.3)
        c = halfplane_circuit(w)
        for b in ((w + ONE // 4) % ONE, (w - ONE // 4) % ONE):
            assert c.evaluate(b) == 0

    def test_batch_equals_single(self, fhe):
        backend, kp = fhe
        w = to_fixed(0.71)
        c = halfplane_circuit(w)
        xs = [int(v) for v in np.random.default_rng(4).integers(0, ONE, 50)]
        cts = backend.encrypt_many(kp.pk, xs, 62)
        out = backend.eval_batch(kp.pk, c, [[ct] for ct in cts])
        assert [backend.decrypt(kp.sk, o) for o in out] == [c.evaluate(x) for x in xs]


class TestCircuitValidation:
    def test_cycle_rejected(self):
        with pytest.raises(ValueError):
            CircuitDescription(1, (("AND", 0, 1),), (1,))

    def test_unknown_gate(self):
        with pytest.raises(ValueError):
            CircuitDescription(1, (("NAND", 0, 0),), (1,))

    def test_no_outputs(self):
        with pytest.raises(ValueError):
            CircuitDescription(1, (), ())

    def test_builder(self):
        cb = CircuitBuilder(2)
        out = cb.NOT(cb.AND(0, 1))
        c = cb.build([out])
        assert [c.evaluate(v) for v in range(4)] == [1, 1, 1, 0]
