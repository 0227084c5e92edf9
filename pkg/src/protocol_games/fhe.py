"""FHE interface (keygen / encrypt / decrypt / eval) with a sealed reference backend.

Ciphertexts are uniform random nonces.  Plaintexts sit in a table private to
the backend that only ``decrypt`` (which needs the secret key) reads back.
Homomorphic evaluation runs the circuit on the hidden plaintexts and files the
result under a fresh nonce, so players holding ``pk`` can compute on
ciphertexts without ever seeing what is inside.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import Budget, charge, rng_stream

SCHEME_ID = "sealed-v1"
GATE_OPS = 16  # ops charged per gate during homomorphic evaluation
ENCRYPT_OPS_PER_BIT = 16

GATES = ("AND", "OR", "XOR", "NOT", "CONST0", "CONST1")


class FHEError(RuntimeError):
    pass


@dataclass(frozen=True)
class PublicKey:
    key_id: bytes
    lam: int

    def __repr__(self):
        return f"PublicKey({self.key_id.hex()[:12]}, lam={self.lam})"


@dataclass(frozen=True)
class SecretKey:
    key_id: bytes
    token: bytes = field(repr=False)

    def __repr__(self):
        return "SecretKey(<sealed>)"


@dataclass(frozen=True)
class KeyPair:
    pk: PublicKey
    sk: SecretKey
    lam: int


@dataclass(frozen=True)
class Ciphertext:
    handle: bytes
    n_bits: int
    scheme_id: str = SCHEME_ID

    def hex(self) -> str:
        return self.handle.hex()


# ---------------------------------------------------------------------------
# Circuits


@dataclass(frozen=True)
class CircuitDescription:
    """Boolean circuit over AND/OR/XOR/NOT/CONST0/CONST1.

    Wires ``0 .. n_inputs-1`` are the input bits (little-endian, concatenated
    across input ciphertexts).  Gate ``g`` writes wire ``n_inputs + g`` and
    may only read lower-numbered wires, which makes the circuit acyclic by
    construction.
    """

    n_inputs: int
    gates: tuple
    outputs: tuple

    def __post_init__(self):
        if self.n_inputs < 0:
            raise ValueError("negative input arity")
        gates = tuple(tuple(g) for g in self.gates)
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "outputs", tuple(int(o) for o in self.outputs))
        for i, g in enumerate(gates):
            if len(g) != 3 or g[0] not in GATES:
                raise ValueError(f"gate {i}: unknown gate {g!r}")
            op, a, b = g
            wire = self.n_inputs + i
            needed = {"NOT": (a,), "CONST0": (), "CONST1": ()}.get(op, (a, b))
            for src in needed:
                if not 0 <= src < wire:
                    raise ValueError(f"gate {i}: input wire {src} not available (cycle or dangling)")
        if not self.outputs:
            raise ValueError("circuit has no outputs")
        total = self.n_inputs + len(gates)
        for o in self.outputs:
            if not 0 <= o < total:
                raise ValueError(f"output wire {o} out of range")

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    @property
    def size(self) -> int:
        return len(self.gates)

    def evaluate_sliced(self, inputs: Sequence[int], mask: int) -> list[int]:
        """Evaluate on bit-sliced words: bit j of word i is input bit i of instance j."""
        w = list(inputs)
        for op, a, b in self.gates:
            if op == "AND":
                w.append(w[a] & w[b])
            elif op == "OR":
                w.append(w[a] | w[b])
            elif op == "XOR":
                w.append(w[a] ^ w[b])
            elif op == "NOT":
                w.append(~w[a] & mask)
            elif op == "CONST0":
                w.append(0)
            else:
                w.append(mask)
        return [w[o] for o in self.outputs]

    def evaluate(self, value: int) -> int:
        """Plain evaluation on an integer holding the input bits."""
        bits = [(value >> i) & 1 for i in range(self.n_inputs)]
        out = self.evaluate_sliced(bits, 1)
        return sum(bit << i for i, bit in enumerate(out))


class CircuitBuilder:
    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self.gates: list[tuple] = []

    def _add(self, op, a=-1, b=-1) -> int:
        self.gates.append((op, a, b))
        return self.n_inputs + len(self.gates) - 1

    def AND(self, a, b):
        return self._add("AND", a, b)

    def OR(self, a, b):
        return self._add("OR", a, b)

    def XOR(self, a, b):
        return self._add("XOR", a, b)

    def NOT(self, a):
        return self._add("NOT", a)

    def const(self, bit: int):
        return self._add("CONST1" if bit else "CONST0")

    def build(self, outputs) -> CircuitDescription:
        return CircuitDescription(self.n_inputs, tuple(self.gates), tuple(outputs))


def identity_circuit(n: int) -> CircuitDescription:
    return CircuitDescription(n, (), tuple(range(n)))


def xor_circuit() -> CircuitDescription:
    return CircuitDescription(2, (("XOR", 0, 1),), (2,))


def _add_constant(cb: CircuitBuilder, k: int, n: int) -> list[int]:
    """Ripple-carry wires for (input + k) mod 2^n."""
    carry = None
    bits = []
    for i in range(n):
        kb = (k >> i) & 1
        if carry is None:
            if kb:
                bits.append(cb.NOT(i))
                carry = i
            else:
                bits.append(i)
        elif kb:
            bits.append(cb.NOT(cb.XOR(i, carry)))
            carry = cb.OR(i, carry)
        else:
            bits.append(cb.XOR(i, carry))
            carry = cb.AND(i, carry)
    return bits


def add_constant_circuit(k: int, n: int) -> CircuitDescription:
    """x -> (x + k) mod 2^n."""
    cb = CircuitBuilder(n)
    return cb.build(_add_constant(cb, k % (1 << n), n))


def halfplane_circuit(w: int, n_bits: int = 62) -> CircuitDescription:
    """One-bit circuit computing 1{h_w(x) = +1} on an n-bit angle.

    With d = (x - w) mod 2^n, the label is +1 iff d < 2^(n-2) or
    d > 3 * 2^(n-2); the boundary points themselves map to 0 (label -1).
    """
    if n_bits < 3:
        raise ValueError("need at least 3 bits")
    cb = CircuitBuilder(n_bits)
    bits = _add_constant(cb, (-w) % (1 << n_bits), n_bits)
    t1, t0 = bits[-1], bits[-2]
    any_low = bits[0]
    for b in bits[1:-2]:
        any_low = cb.OR(any_low, b)
    first_quarter = cb.AND(cb.NOT(t1), cb.NOT(t0))
    last_quarter = cb.AND(cb.AND(t1, t0), any_low)
    return cb.build([cb.OR(first_quarter, last_quarter)])


# ---------------------------------------------------------------------------
# Backend


class _KeyState:
    def __init__(self, key_id: bytes, lam: int, seed_words):
        self.key_id = key_id
        self.lam = lam
        self.table: dict[bytes, tuple[int, int]] = {}
        self.lock = threading.Lock()
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_words)))


class SealedFHE:
    """Reference backend.  Deterministic for a fixed seed."""

    def __init__(self, seed: int = 0):
        self._rng = rng_stream(seed, "fhe-backend")
        self._keys: dict[bytes, _KeyState] = {}
        self._secrets: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def keygen(self, lam: int = 128) -> KeyPair:
        if lam < 16:
            raise ValueError("security parameter too small")
        with self._lock:
            key_id = self._rng.bytes(16)
            token = self._rng.bytes(32)
            seed_words = [int(x) for x in self._rng.integers(0, 2**32, 4, dtype=np.uint64)]
            self._keys[key_id] = _KeyState(key_id, lam, seed_words)
            self._secrets[key_id] = token
        return KeyPair(PublicKey(key_id, lam), SecretKey(key_id, token), lam)

    def _state(self, pk: PublicKey) -> _KeyState:
        try:
            return self._keys[pk.key_id]
        except (KeyError, AttributeError):
            raise FHEError("unknown public key") from None

    @staticmethod
    def _handle_len(lam: int) -> int:
        return max(16, lam // 8)

    def _issue(self, st: _KeyState, values: Sequence[int], n_bits: int) -> list[Ciphertext]:
        hl = self._handle_len(st.lam)
        with st.lock:
            raw = st.rng.bytes(hl * len(values))
            out = []
            for i, v in enumerate(values):
                h = raw[i * hl : (i + 1) * hl]
                st.table[h] = (int(v), n_bits)
                out.append(Ciphertext(h, n_bits))
        return out

    def encrypt(self, pk: PublicKey, message: int, n_bits: int = 1, budget: Budget | None = None) -> Ciphertext:
        return self.encrypt_many(pk, [message], n_bits, budget)[0]

    def encrypt_many(self, pk: PublicKey, messages: Iterable[int], n_bits: int = 1, budget: Budget | None = None) -> list[Ciphertext]:
        st = self._state(pk)
        msgs = [int(m) for m in messages]
        for m in msgs:
            if not 0 <= m < (1 << n_bits):
                raise ValueError(f"message {m} does not fit in {n_bits} bits")
        charge(budget, ops=ENCRYPT_OPS_PER_BIT * n_bits * len(msgs))
        return self._issue(st, msgs, n_bits)

    def decrypt(self, sk: SecretKey, ct: Ciphertext) -> int | None:
        if self._secrets.get(sk.key_id) != sk.token:
            return None
        st = self._keys[sk.key_id]
        entry = st.table.get(getattr(ct, "handle", None))
        if entry is None or entry[1] != ct.n_bits:
            return None
        return entry[0]

    def _lookup(self, st: _KeyState, cts: Sequence[Ciphertext]) -> list[tuple[int, int]]:
        out = []
        for ct in cts:
            entry = st.table.get(getattr(ct, "handle", None))
            if entry is None:
                raise FHEError("unknown ciphertext handle")
            out.append(entry)
        return out

    def eval(self, pk: PublicKey, circuit: CircuitDescription, cts: Sequence[Ciphertext], budget: Budget | None = None) -> Ciphertext:
        return self.eval_batch(pk, circuit, [cts], budget)[0]

    def eval_batch(
        self,
        pk: PublicKey,
        circuit: CircuitDescription,
        batch: Sequence[Sequence[Ciphertext]],
        budget: Budget | None = None,
    ) -> list[Ciphertext]:
        """Evaluate ``circuit`` on many input tuples; cost is per tuple."""
        st = self._state(pk)
        if not batch:
            return []
        values = []
        for cts in batch:
            entries = self._lookup(st, cts)
            if sum(nb for _, nb in entries) != circuit.n_inputs:
                raise FHEError("circuit arity does not match ciphertext widths")
            v, shift = 0, 0
            for val, nb in entries:
                v |= val << shift
                shift += nb
            values.append(v)
        charge(budget, ops=GATE_OPS * circuit.size * len(batch))
        results = _run_sliced(circuit, values)
        return self._issue(st, results, circuit.n_outputs)

    def table_size(self, pk: PublicKey) -> int:
        return len(self._state(pk).table)


def _bit_columns(values: Sequence[int], n: int) -> list[int]:
    """Transpose values into n bit-sliced words."""
    m = len(values)
    if n <= 63:
        v = np.array(values, dtype=np.uint64)
        cols = []
        for i in range(n):
            bits = ((v >> np.uint64(i)) & np.uint64(1)).astype(np.uint8)
            cols.append(int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little"))
        return cols
    return [sum(((val >> i) & 1) << j for j, val in enumerate(values)) for i in range(n)]


def _run_sliced(circuit: CircuitDescription, values: Sequence[int]) -> list[int]:
    m = len(values)
    mask = (1 << m) - 1
    outs = circuit.evaluate_sliced(_bit_columns(values, circuit.n_inputs), mask)
    res = np.zeros(m, dtype=object)
    nbytes = (m + 7) // 8
    for k, word in enumerate(outs):
        bits = np.unpackbits(np.frombuffer(word.to_bytes(nbytes, "little"), dtype=np.uint8), bitorder="little")[:m]
        res[bits.astype(bool)] += 1 << k
    return [int(r) for r in res]
