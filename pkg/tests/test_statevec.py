"""Checks for the register-level state machine: norm bookkeeping, gate
application against dense oracles, factor splitting/merging, and the error
conditions (cap, dirty release, non-unitary input)."""

import numpy as np
import pytest

from qccsim import statevec as sv


def dense_on(gate, width, pos):
    """Independent oracle: `gate` on qubit `pos` of a `width`-qubit register.

    Qubit 0 is the least significant label bit, so the kron chain runs from
    the top qubit down.
    """
    u = np.eye(1, dtype=np.complex128)
    for q in reversed(range(width)):
        u = np.kron(u, gate if q == pos else sv.ID2)
    return u


def extract_matrix(build, width):
    """Extract the dense matrix of a composed operation by feeding in every
    basis state of a fresh machine."""
    cols = []
    for b in range(1 << width):
        sim = sv.SimState()
        sim.alloc("r", 0, width)
        for q in range(width):
            if (b >> q) & 1:
                sim.apply_single(sv.X, "r", offset=q)
        build(sim)
        cols.append(sim.register_state("r"))
    return np.stack(cols, axis=1)


class TestGates:
    def test_single_qubit_gate_matches_dense_oracle(self):
        for pos in range(3):
            sim = sv.SimState()
            sim.alloc("r", 0, 3)
            for q in range(3):
                sim.apply_single(sv.H, "r", offset=q)
            sim.apply_single(sv.rz(0.7), "r", offset=pos)
            got = sim.register_state("r")
            want = dense_on(sv.rz(0.7), 3, pos) @ (
                np.full(8, 1 / np.sqrt(8), dtype=np.complex128))
            assert np.allclose(got, want, atol=1e-12)

    def test_norm_preserved_through_op_sequence(self, rng):
        sim = sv.SimState()
        sim.alloc("a", 0, 3)
        sim.alloc("b", 1, 2)
        for _ in range(40):
            q = rng.integers(0, 3)
            sim.apply_single(sv.H, "a", offset=int(q))
            sim.apply_single(sv.rz(float(rng.uniform(0, 6.28))), "b",
                             offset=int(rng.integers(0, 2)))
            sim.apply_classical_map(["a", "b"],
                                    lambda v: v ^ 0b10001, key="mix")
            assert sim.total_norm_dev() < 1e-9

    def test_composed_operation_is_unitary(self):
        """Extract a 3-qubit composed op as a dense matrix and check U†U = I
        against nothing but numpy."""
        def build(sim):
            sim.apply_single(sv.H, "r", offset=0)
            sim.apply_classical_map(
                ["r"], lambda v: v ^ ((v & 1) << 1), key="cnot01")
            sim.apply_phase_predicate(["r"], lambda v: v == 0b101)
            sim.apply_single(sv.rz(1.1), "r", offset=2)
            sim.apply_unitary(["r"], dense_on(sv.H, 3, 1), key="h1")
        u = extract_matrix(build, 3)
        assert np.abs(u.conj().T @ u - np.eye(8)).max() < 1e-8

    def test_apply_unitary_respects_register_order(self):
        # register set order: first register is least significant
        sim = sv.SimState()
        sim.alloc("lo", 0, 1)
        sim.alloc("hi", 0, 1)
        cx = np.eye(4, dtype=np.complex128)[[0, 3, 2, 1]]  # control = bit 0
        sim.apply_single(sv.X, "lo")
        sim.apply_unitary(["lo", "hi"], cx, key="cx")
        probs_hi = sim.peek_probs("hi")
        assert np.allclose(probs_hi, [0, 1])

    def test_non_unitary_matrix_rejected(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 1)
        with pytest.raises(sv.NonUnitaryGateError):
            sim.apply_unitary(["r"], np.array([[1, 0], [1, 1]],
                                              dtype=np.complex128))

    def test_irreversible_map_rejected(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 2)
        with pytest.raises(sv.IrreversibleMapError):
            sim.apply_classical_map(["r"], lambda v: 0)


class TestMapsAndPhases:
    def test_classical_map_on_basis_state(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 4)
        sim.apply_single(sv.X, "r", offset=1)  # |0010> = 2
        sim.apply_classical_map(["r"], lambda v: (v + 5) % 16, key="add5")
        amps = sim.register_state("r")
        assert np.argmax(np.abs(amps)) == 7

    def test_map_chain_on_disjoint_registers_keeps_factors_apart(self):
        """Ops on two never-entangled registers arrive in one chain; the
        machine must not glue the factors together."""
        sim = sv.SimState()
        sim.alloc("a", 0, 3)
        sim.alloc("b", 1, 3)
        sim.apply_map_chain([
            (["a"], lambda v: v ^ 1, "xa"),
            (["b"], lambda v: v ^ 4, "xb"),
            (["a"], lambda v: (v + 1) % 8, "inca"),
        ], chain_key="two-sided")
        assert sim.factor("a").width == 3
        assert sim.factor("b").width == 3
        assert np.argmax(np.abs(sim.register_state("a"))) == 2
        assert np.argmax(np.abs(sim.register_state("b"))) == 4

    def test_phase_predicate_flips_sign(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 2)
        sim.apply_single(sv.H, "r", offset=0)
        sim.apply_single(sv.H, "r", offset=1)
        sim.apply_phase_predicate(["r"], lambda v: v != 0, key="mark")
        amps = sim.register_state("r")
        assert amps[0].real > 0
        assert all(a.real < 0 for a in amps[1:])


class TestMeasurement:
    def test_uniform_measurement_statistics(self):
        rng = np.random.default_rng(99)
        counts = 0
        for _ in range(4000):
            sim = sv.SimState()
            sim.alloc("q", 0, 1)
            sim.apply_single(sv.H, "q")
            counts += sim.measure("q", rng)
        assert abs(counts / 4000 - 0.5) < 0.05

    def test_measurement_collapses_entangled_partner(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sim = sv.SimState()
            sim.alloc("a", 0, 1)
            sim.alloc("b", 1, 1)
            sim.apply_single(sv.H, "a")
            sim.apply_classical_map(["a", "b"],
                                    lambda v: v ^ ((v & 1) << 1), key="copy")
            ma = sim.measure("a", rng)
            mb = sim.measure("b", rng)
            assert ma == mb

    def test_peek_probs_sums_to_one(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 3)
        for q in range(3):
            sim.apply_single(sv.H, "r", offset=q)
        assert abs(sim.peek_probs("r").sum() - 1.0) < 1e-12


class TestLifecycle:
    def test_alloc_over_cap_refused(self):
        sim = sv.SimState(cap=10)
        with pytest.raises(sv.QubitCapError):
            sim.alloc("big", 0, 11)

    def test_merge_over_cap_refused(self):
        sim = sv.SimState(cap=10)
        sim.alloc("a", 0, 6)
        sim.alloc("b", 0, 6)
        with pytest.raises(sv.QubitCapError):
            sim.apply_classical_map(["a", "b"], lambda v: v ^ 1)

    def test_release_clean_ancilla(self):
        sim = sv.SimState()
        sim.alloc("anc", 0, 2)
        sim.apply_single(sv.X, "anc")
        sim.apply_single(sv.X, "anc")  # back to |00>
        sim.release("anc")
        with pytest.raises(sv.RegisterError):
            sim.factor("anc")

    def test_release_dirty_ancilla_raises(self):
        sim = sv.SimState()
        sim.alloc("anc", 0, 1)
        sim.apply_single(sv.X, "anc")
        with pytest.raises(sv.DirtyAncillaError):
            sim.release("anc")

    def test_double_alloc_rejected(self):
        sim = sv.SimState()
        sim.alloc("r", 0, 1)
        with pytest.raises(sv.RegisterError):
            sim.alloc("r", 1, 2)
