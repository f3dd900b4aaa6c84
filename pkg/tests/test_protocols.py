"""Protocol builders: closed-form costs vs derived schedules, search plans,
and end-to-end correctness of each protocol against the plain predicate
evaluators at desk scale."""

import math

import numpy as np
import pytest

from qccsim import engine
from qccsim import functions as fn
from qccsim import netmodel as nm
from qccsim import protocols as pr
from conftest import random_inputs


def schedule_cost(prog):
    led = nm.derive_schedule(prog).ledger()
    return led.qcc, led.rounds


class TestQueryGadget:
    def test_cost_formula(self):
        for n in (4, 8, 16):
            for k in (2, 3, 4):
                L = max(1, math.ceil(math.log2(n)))
                assert pr.gadget_cost(n, k) == 4 * k * L + 2 * k

    def test_gadget_program_cost_matches_formula(self):
        for n, k in ((4, 2), (8, 3)):
            prog = pr.build_query_gadget(n, k).as_program()
            qcc, _ = schedule_cost(prog)
            assert qcc == pr.gadget_cost(n, k)

    def test_gadget_computes_and_at_the_measured_index(self, rng):
        """The wrapper puts the index register in uniform superposition; at
        whatever index the measurement lands on, the hit bit must equal
        AND_g x_g[i]."""
        n, k = 8, 3
        prog = pr.build_query_gadget(n, k).as_program()
        for t in range(25):
            xs = random_inputs(rng, n, k)
            res = engine.execute(prog, xs, seed=t)
            i, hit = res.bindings["i"], res.bindings["hit"]
            want = int(all(xs[g][i] == "1" for g in range(1, k + 1)))
            assert hit == want
            assert res.outputs[0] == want


class TestSearchPlans:
    def test_plan_budget_and_critical_rounds(self):
        """Budget stays under 3*ceil(sqrt(n)), per-round size under
        ceil((pi/4)sqrt(n)), rounds grow, and the plan only stops short of its
        critical-round quota when the budget forces it."""
        need = math.ceil(math.log(1 / 3) / math.log(3 / 4))
        for n in (4, 8, 16, 64, 300):
            plan = pr.grover_plan(n)
            cap_total = 3 * math.ceil(math.sqrt(plan.npow))
            cap_round = math.ceil(math.pi / 4 * math.sqrt(plan.npow))
            assert plan.budget <= cap_total
            assert all(m <= cap_round for m in plan.ms)
            assert list(plan.ms) == sorted(plan.ms)
            assert plan.critical <= need
            if plan.critical < need:
                nxt = min(math.ceil(1.2 ** (plan.rounds + 1)), cap_round)
                assert plan.budget + nxt > cap_total

    def test_plan_values_pinned(self):
        assert pr.grover_plan(4).ms == (2, 2, 2)
        assert pr.grover_plan(8).ms == (2, 2, 2, 3)
        assert pr.grover_plan(16).ms == (2, 2, 2, 3, 3)
        assert pr.grover_plan(64).ms == (2, 2, 2, 3, 3, 3, 4, 5)

    def test_rounds_property(self):
        plan = pr.grover_plan(8)
        assert pr.disj_round_count(8, 3) == 4 * sum(plan.ms) + 4 * len(plan.ms) + 1


class TestDisjointness:
    def test_cost_formulas_match_derived_schedules(self):
        for n, k in ((4, 2), (4, 3), (8, 3)):
            prog = pr.build_disj_grover(n, k)
            qcc, rounds = schedule_cost(prog)
            assert qcc == pr.disj_cost(n, k)
            assert rounds == pr.disj_round_count(n, k)

    def test_no_false_positives_and_few_false_negatives(self, rng):
        n, k = 4, 3
        prog = pr.build_disj_grover(n, k)
        fp = fn_count = pos_runs = 0
        for t in range(60):
            xs = random_inputs(rng, n, k)
            truth = fn.eval_disj([xs[g] for g in range(1, k + 1)])
            got = engine.execute(prog, xs, seed=100 + t).outputs[0]
            if truth == 0 and got == 1:
                fp += 1
            if truth == 1:
                pos_runs += 1
                fn_count += got == 0
        assert fp == 0
        assert pos_runs == 0 or fn_count / pos_runs <= 1 / 3

    def test_empty_and_full_intersections(self):
        prog = pr.build_disj_grover(4, 2)
        out0 = engine.execute(prog, {1: "1010", 2: "0101"}, seed=3).outputs[0]
        out1 = engine.execute(prog, {1: "1111", 2: "1111"}, seed=3).outputs[0]
        assert out0 == 0
        assert out1 == 1


class TestBoundedRound:
    def test_cost_is_blocks_times_per_block(self):
        n, k, M = 16, 3, 2
        blocks = math.ceil(n / M ** 2)
        per_block = pr.disj_cost(M ** 2, k) - k
        assert pr.bounded_round_cost(n, k, M) == blocks * per_block + k
        prog = pr.build_bounded_round_disj(n, k, M)
        qcc, rounds = schedule_cost(prog)
        assert qcc == pr.bounded_round_cost(n, k, M)
        assert rounds == pr.bounded_round_count(n, k, M)

    def test_blocks_share_round_labels(self):
        """Lockstep: the bounded-round program uses the per-block round count,
        not blocks x per-block rounds."""
        assert pr.bounded_round_count(16, 3, 2) == pr.disj_round_count(4, 3)

    def test_guards(self):
        with pytest.raises(ValueError):
            pr.build_bounded_round_disj(16, 3, 1)
        with pytest.raises(ValueError):
            pr.build_bounded_round_disj(4, 3, 3)  # M^2 > n

    def test_correctness_small(self, rng):
        prog = pr.build_bounded_round_disj(8, 2, 2)
        fp = 0
        wrong = 0
        for t in range(40):
            xs = random_inputs(rng, 8, 2)
            truth = fn.eval_disj([xs[g] for g in (1, 2)])
            got = engine.execute(prog, xs, seed=t).outputs[0]
            fp += truth == 0 and got == 1
            wrong += got != truth
        assert fp == 0
        assert wrong / 40 <= 1 / 3


class TestEquality:
    def test_cost_is_linear_in_players_not_input(self):
        for n in (4, 16):
            for k in (2, 5):
                prog = pr.build_equality(n, k)
                qcc, rounds = schedule_cost(prog)
                assert qcc == pr.equality_cost(k, 2) == 2 * k + k
                assert rounds == 2

    def test_completeness_exact(self, rng):
        prog = pr.build_equality(4, 3)
        for t in range(30):
            x = "".join(rng.choice(["0", "1"], size=4))
            res = engine.execute(prog, {g: x for g in (1, 2, 3)}, seed=t)
            assert res.outputs[0] == 1

    def test_soundness_error_decays_with_repetitions(self, rng):
        """With c fingerprint rounds the false-accept rate on unequal inputs
        is (1/2)^c; check the trend at c=1 vs c=3."""
        rates = []
        for c in (1, 3):
            prog = pr.build_equality(4, 3, c=c)
            accept = 0
            trials = 400
            for t in range(trials):
                xs = {1: "0110", 2: "0110", 3: "0111"}
                accept += engine.execute(prog, xs, seed=t).outputs[0]
            rates.append(accept / trials)
        assert abs(rates[0] - 0.5) < 0.1
        assert abs(rates[1] - 0.125) < 0.07

    def test_polynomial_fingerprint_variant(self, rng):
        prog = pr.build_equality(6, 2, c=2, method="polynomial")
        for t in range(20):
            x = "".join(rng.choice(["0", "1"], size=6))
            assert engine.execute(prog, {1: x, 2: x}, seed=t).outputs[0] == 1
        # unequal pair: accept rate bounded by deg/field over the c draws
        accept = sum(
            engine.execute(prog, {1: "101010", 2: "101011"}, seed=t).outputs[0]
            for t in range(200))
        assert accept / 200 < 1 / 3


class TestAACostModel:
    def test_formula_and_schedule_agree(self):
        for n in (16, 64, 1 << 12):
            for k in (2, 3, 8):
                sched = pr.build_aa_cost_model(n, k)
                assert sched.ledger().qcc == pr.aa_cost(n, k)
                assert sched.ledger().qcc == 2 * k * math.ceil(math.sqrt(n)) + k

    def test_round_constant_scales_cost(self):
        assert pr.aa_cost(64, 3, c_aa=2.0) == 2 * 3 * 16 + 3

    def test_schedule_metadata(self):
        sched = pr.build_aa_cost_model(64, 3)
        assert sched.meta["n"] == 64


class TestSymmetric:
    def test_counting_phase_bits_formula(self):
        assert pr.counting_phase_bits(4, 2) == 7
        got = pr.counting_phase_bits(8, 2)
        want = math.ceil((6 + math.log2(8 * 3)) / 2 - 1e-12) + 2
        assert got == want

    def test_zero_report_subprotocol_exact(self, rng):
        """A pure high-weight table (l0 = 0) runs the exact zero-set exchange
        and never errs."""
        spec = fn.SymmetricSpec(5, 3, (0, 0, 0, 0, 1, 1))  # weight >= 4
        prog = pr.build_symmetric(spec)
        for t in range(40):
            xs = random_inputs(rng, 5, 3)
            truth = fn.eval_symmetric(spec, [xs[g] for g in (1, 2, 3)])
            assert engine.execute(prog, xs, seed=t).outputs[0] == truth

    def test_constant_table_costs_one_broadcast(self):
        spec = fn.SymmetricSpec(4, 3, (1, 1, 1, 1, 1))
        prog = pr.build_symmetric(spec)
        qcc, _ = schedule_cost(prog)
        assert qcc == 3  # answer broadcast only
        out = engine.execute(prog, {1: "0000", 2: "1111", 3: "0101"},
                             seed=0).outputs[0]
        assert out == 1

    def test_counting_side_error_bounded(self, rng):
        spec = fn.SymmetricSpec(4, 2, (1, 0, 1, 1, 1))  # l0 = 1, l1 = 0
        prog = pr.build_symmetric(spec)
        wrong = 0
        for t in range(60):
            xs = random_inputs(rng, 4, 2)
            truth = fn.eval_symmetric(spec, [xs[g] for g in (1, 2)])
            wrong += engine.execute(prog, xs, seed=t).outputs[0] != truth
        assert wrong / 60 <= 1 / 3

    def test_cost_formula_matches_schedule(self):
        for spec in (fn.SymmetricSpec(4, 2, (1, 0, 1, 1, 1)),
                     fn.SymmetricSpec(5, 3, (0, 0, 0, 0, 1, 1)),
                     fn.ip_spec(4, 2)):
            prog = pr.build_symmetric(spec)
            qcc, _ = schedule_cost(prog)
            assert qcc == pr.symmetric_cost(spec)

    def test_weight_estimate_decoder(self):
        # phase bindings spell omega = 1/4 -> m_hat = npow * sin^2(pi/4)
        bindings = {"ph1": 0, "ph2": 1}
        got = pr.iqpe_weight_estimate(bindings, 2, 8)
        assert got == round(8 * math.sin(math.pi / 4) ** 2)


class TestPeakWidths:
    def test_disj_peak_width_formula(self):
        L = 3
        assert pr.disj_peak_width(8, 3) == L + 1 + 3 * (L + 1)

    def test_bounded_round_narrows_the_factor(self):
        assert pr.disj_peak_width(16, 3, M=2) < pr.disj_peak_width(16, 3)

    def test_equality_peak_width_is_fingerprint_register(self):
        assert pr.equality_peak_width(4, c=2, method="ip") == 2
        assert pr.equality_peak_width(4, c=5, method="ip") == 5

    def test_helpers_are_sufficient_caps(self, rng):
        """Executing right at the advertised peak width must succeed — the
        helpers exist so the CLI can refuse *before* simulating."""
        cases = [
            (pr.build_disj_grover(4, 2), pr.disj_peak_width(4, 2)),
            (pr.build_bounded_round_disj(8, 2, 2), pr.disj_peak_width(8, 2, 2)),
            (pr.build_equality(4, 3), pr.equality_peak_width(4)),
            (pr.build_symmetric(fn.SymmetricSpec(4, 2, (1, 0, 1, 1, 1))),
             pr.symmetric_peak_width(fn.SymmetricSpec(4, 2, (1, 0, 1, 1, 1)))),
        ]
        for prog, peak in cases:
            xs = random_inputs(rng, prog.input_widths[1],
                               prog.topology.num_players)
            engine.execute(prog, xs, seed=0, cap=peak)  # must not raise
