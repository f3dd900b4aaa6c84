"""Program representation, schedules, cost ledgers, obliviousness checking,
and the two model conversions."""

import numpy as np
import pytest

from qccsim import engine
from qccsim import netmodel as nm
from qccsim import protocols as pr
from qccsim import statevec as sv


def ping_pong(width=2, rounds=3):
    """Tiny 2-player p2p program: a register bounces back and forth."""
    b = nm.ProgramBuilder(nm.Topology(2, coordinator=False), name="ping")
    b.declare_input(1, 1)
    b.declare_input(2, 1)
    b.alloc("ball", 1, width)
    for r in range(1, rounds + 1):
        src, dst = (1, 2) if r % 2 else (2, 1)
        b.send(src, dst, "ball", r)
    b.measure(2 if rounds % 2 else 1, "ball", "m")
    b.output(1, lambda ctx: 0)
    b.output(2, lambda ctx: 0)
    return b.build()


class TestLedger:
    def test_qcc_counts_qubits_not_messages(self):
        led = nm.derive_schedule(ping_pong(width=3, rounds=4)).ledger()
        assert led.qcc == 12
        assert led.rounds == 4

    def test_per_party_costs_sum_to_twice_qcc(self):
        led = nm.derive_schedule(ping_pong()).ledger()
        total = sum(led.qcc_per_party(p) for p in (1, 2))
        assert total == 2 * led.qcc

    def test_fingerprint_stable_and_register_name_blind(self):
        e1 = [nm.TransmissionEvent(1, 1, 2, "ball", 2)]
        e2 = [nm.TransmissionEvent(1, 1, 2, "other", 2)]
        assert nm.CostLedger(e1).fingerprint() == nm.CostLedger(e2).fingerprint()

    def test_fingerprint_sees_width_change(self):
        e1 = [nm.TransmissionEvent(1, 1, 2, "r", 2)]
        e2 = [nm.TransmissionEvent(1, 1, 2, "r", 3)]
        assert nm.CostLedger(e1).fingerprint() != nm.CostLedger(e2).fingerprint()

    def test_width_by_round(self):
        prog = ping_pong(width=2, rounds=3)
        led = nm.derive_schedule(prog).ledger()
        assert led.width_by_round() == {1: 2, 2: 2, 3: 2}

    def test_program_qcc_agrees_with_schedule(self):
        prog = pr.build_equality(4, 3)
        assert nm.program_qcc(prog) == nm.derive_schedule(prog).ledger().qcc


class TestScheduleSerialization:
    def test_json_roundtrip(self):
        sched = nm.derive_schedule(ping_pong())
        back = nm.Schedule.from_json(sched.to_json())
        assert back.ledger().fingerprint() == sched.ledger().fingerprint()
        assert back.ledger().qcc == sched.ledger().qcc


class TestValidation:
    def test_send_of_unallocated_register_rejected(self):
        b = nm.ProgramBuilder(nm.Topology(2, coordinator=False))
        b.declare_input(1, 1)
        b.declare_input(2, 1)
        b.send(1, 2, "ghost", 1)
        with pytest.raises(nm.MalformedProgramError):
            nm.validate_program(b.build())

    def test_send_to_unknown_party_rejected(self):
        b = nm.ProgramBuilder(nm.Topology(2, coordinator=False))
        b.declare_input(1, 1)
        b.declare_input(2, 1)
        b.alloc("r", 1, 1)
        b.send(1, 5, "r", 1)
        with pytest.raises(nm.MalformedProgramError):
            nm.validate_program(b.build())

    def test_conditional_send_needs_optin(self):
        b = nm.ProgramBuilder(nm.Topology(2, coordinator=False))
        b.declare_input(1, 1)
        b.declare_input(2, 1)
        b.alloc("r", 1, 1)
        b.measure(1, "r", "m")
        b.alloc("s", 1, 1)
        b.send(1, 2, "s", 1, condition=lambda bv: bv["m"] == 1)
        b.output(1, lambda ctx: 0)
        b.output(2, lambda ctx: 0)
        prog = b.build()
        with pytest.raises(nm.MalformedProgramError):
            nm.validate_program(prog)
        nm.validate_program(prog, allow_conditional=True)


class TestObliviousness:
    def test_shipped_protocol_is_oblivious(self):
        prog = pr.build_equality(4, 2)
        inputs = [{1: "0000", 2: "0000"}, {1: "1010", 2: "0101"},
                  {1: "1111", 2: "1111"}]
        report = nm.verify_oblivious(prog, inputs, seed=3, trials_per_input=4)
        assert report.ok
        assert bool(report)
        assert report.divergence is None

    def test_input_dependent_traffic_is_flagged(self):
        """A program that transmits only when the input bit is 1 must show a
        divergence between inputs 0 and 1."""
        b = nm.ProgramBuilder(nm.Topology(2, coordinator=False), name="leaky")
        b.declare_input(1, 1)
        b.declare_input(2, 1)
        b.alloc("c", 1, 1)
        b.local(1, "map", ["c"], lambda ctx: np.arange(2) ^ int(ctx.x, 2),
                input_of=1, label="load")
        b.measure(1, "c", "m")
        b.alloc("payload", 1, 1)
        b.send(1, 2, "payload", 1, condition=lambda bv: bv["m"] == 1)
        b.output(1, lambda ctx: 0)
        b.output(2, lambda ctx: 0)
        prog = b.build()
        report = nm.verify_oblivious(prog, [{1: "0", 2: "0"}, {1: "1", 2: "0"}],
                                     seed=0)
        assert not report.ok
        assert report.divergence is not None


class TestModelConversions:
    def test_to_coordinator_doubles_qcc_and_keeps_rounds(self):
        prog = ping_pong(width=2, rounds=3)
        co = nm.to_coordinator(prog)
        led, led_co = (nm.derive_schedule(p).ledger() for p in (prog, co))
        assert led_co.qcc == 2 * led.qcc
        assert led_co.rounds == led.rounds

    def test_to_coordinator_rejects_coordinator_programs(self):
        prog = pr.build_equality(4, 2)
        with pytest.raises(ValueError):
            nm.to_coordinator(prog)

    def test_to_point_to_point_cost_and_round_bounds(self):
        for prog in (pr.build_equality(4, 3), pr.build_disj_grover(4, 2)):
            led = nm.derive_schedule(prog).ledger()
            p2p = nm.to_point_to_point(prog)
            led2 = nm.derive_schedule(p2p).ledger()
            assert led2.qcc <= led.qcc
            assert led2.rounds <= 2 * led.rounds

    def test_conversion_roundtrip_preserves_outputs(self):
        """Seed for seed, the converted programs answer exactly like the
        original: the instruction order of measurements and randomness draws
        is untouched."""
        prog = pr.build_equality(4, 3)
        p2p = nm.to_point_to_point(prog)
        co2 = nm.to_coordinator(p2p)
        rng = np.random.default_rng(11)
        for t in range(25):
            xs = {g: "".join(rng.choice(["0", "1"], size=4))
                  for g in range(1, 4)}
            outs = []
            for p in (prog, p2p, co2):
                res = engine.execute(p, xs, seed=500 + t)
                outs.append(res.outputs[min(res.outputs)])
            assert outs[0] == outs[1] == outs[2]

    def test_p2p_conversion_rounds_double_at_most(self):
        prog = pr.build_disj_grover(4, 3)
        M = nm.derive_schedule(prog).ledger().rounds
        p2p = nm.to_point_to_point(prog)
        assert nm.derive_schedule(p2p).ledger().rounds <= 2 * M
