"""Program executor: drives a SimState through an instruction list.

One seeded counter-based generator (Philox) supplies all randomness —
measurement draws and shared-randomness draws — consumed strictly in
instruction order, so a (program, inputs, seed) triple is fully reproducible.

Effect callables are resolved lazily.  Resolved effects are interned by
content so that the state machine's permutation caches key on stable ids, and
ops that read no bindings are resolved only once per execution.  Consecutive
classical-map operations are batched and applied as one composed permutation,
which is what makes the long fan-out/copy sequences in the protocols cheap.
"""

from __future__ import annotations

import hashlib
import os
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from . import netmodel as nm
from . import statevec as sv

ENV_QUBIT_CAP = "QCCSIM_QUBIT_CAP"


class ExecutionError(Exception):
    pass


class BindingView(Mapping):
    """Read-only live view of the classical bindings."""

    def __init__(self, store: dict):
        self._store = store

    def __getitem__(self, k):
        return self._store[k]

    def __iter__(self):
        return iter(self._store)

    def __len__(self):
        return len(self._store)


@dataclass(frozen=True)
class EffectCtx:
    """What an effect callable may look at when it is resolved."""

    widths: tuple
    params: tuple
    x: str | None
    bindings: Mapping | None

    @property
    def total_width(self) -> int:
        return sum(self.widths)


@dataclass
class ExecutionResult:
    outputs: dict
    bindings: dict
    events: list
    sim: sv.SimState

    def ledger(self) -> nm.CostLedger:
        return nm.CostLedger(self.events)


def _resolve_cap(cap):
    if cap is not None:
        return int(cap)
    env = os.environ.get(ENV_QUBIT_CAP)
    return int(env) if env else sv.DEFAULT_QUBIT_CAP


_EFFECT_DTYPE = {"map": np.int64, "phase": np.bool_,
                 "unitary": np.complex128, "single": np.complex128}


def execute(program: nm.ProtocolProgram, inputs: dict | None = None,
            seed: int = 0, cap: int | None = None,
            shared_randomness=None) -> ExecutionResult:
    """Run a program and return outputs, bindings, and the transmission log.

    `inputs` maps party -> bit string (x[i] is character i), one entry per
    party in the program's input contract.  `shared_randomness`, when given,
    is a list of integers consumed by SharedRandom instructions instead of
    the generator — used to enumerate randomness branches exhaustively.
    """
    inputs = dict(inputs or {})
    for party, w in program.input_widths.items():
        x = inputs.get(party)
        if x is None:
            raise ExecutionError(f"missing input for party {party}")
        if len(x) != w or any(c not in "01" for c in x):
            raise ExecutionError(
                f"input for party {party} must be {w} bits, got {x!r}")

    nm.validate_program(program, allow_conditional=True)
    sim = sv.SimState(_resolve_cap(cap))
    rng = np.random.default_rng(np.random.Philox(seed))
    bindings: dict = {}
    bview = BindingView(bindings)
    events: list[nm.TransmissionEvent] = []
    outputs: dict = {}
    shared_iter = iter(shared_randomness) if shared_randomness is not None else None

    pending: list = []            # queued classical maps awaiting one fused apply
    static_effects: dict = {}     # instruction index -> (array, key)
    interned: dict = {}           # content digest -> digest (stable key object)

    def flush():
        if pending:
            sim.apply_map_chain(pending)
            pending.clear()

    def virtual_input(p):
        return program.resolve_input(p, inputs)

    def resolve_effect(idx, op: nm.LocalOp):
        if not op.reads and idx in static_effects:
            return static_effects[idx]
        widths = tuple(sim.registers[r].width for r in op.regs)
        x = virtual_input(op.input_of) if op.input_of is not None else None
        ctx = EffectCtx(widths, op.params, x, bview if op.reads else None)
        arr = np.asarray(op.make(ctx), dtype=_EFFECT_DTYPE[op.kind])
        digest = hashlib.sha1(
            op.kind.encode() + repr(widths).encode() + arr.tobytes()).hexdigest()
        key = interned.setdefault(digest, digest)
        out = (arr, key)
        if not op.reads:
            static_effects[idx] = out
        return out

    for idx, ins in enumerate(program.instructions):
        if isinstance(ins, nm.Alloc):
            sim.alloc(ins.name, ins.party, ins.width)
        elif isinstance(ins, nm.Release):
            flush()
            sim.release(ins.name)
        elif isinstance(ins, nm.LocalOp):
            arr, key = resolve_effect(idx, ins)
            if ins.kind == "map":
                pending.append((list(ins.regs), arr, key))
            elif ins.kind == "phase":
                flush()
                sim.apply_phase_predicate(list(ins.regs), arr, key)
            elif ins.kind == "unitary":
                flush()
                sim.apply_unitary(list(ins.regs), arr, key)
            else:  # single
                flush()
                sim.apply_single(arr, ins.regs[0], ins.offset)
        elif isinstance(ins, nm.Send):
            if ins.condition is not None and not ins.condition(bview):
                continue
            reg = sim.registers[ins.reg]
            reg.owner = ins.dst
            events.append(nm.TransmissionEvent(
                ins.round, ins.src, ins.dst, ins.reg, reg.width))
        elif isinstance(ins, nm.Measure):
            flush()
            bindings[ins.bind] = sim.measure(ins.reg, rng)
        elif isinstance(ins, nm.SharedRandom):
            if shared_iter is not None:
                try:
                    val = int(next(shared_iter))
                except StopIteration:
                    raise ExecutionError(
                        "shared randomness override exhausted") from None
            else:
                bits = rng.integers(0, 2, size=ins.width)
                val = int(sum(int(b) << i for i, b in enumerate(bits)))
            bindings[ins.bind] = val
        elif isinstance(ins, nm.OutputBind):
            x = virtual_input(ins.input_of) if ins.input_of is not None else None
            outputs[ins.party] = int(ins.fn(EffectCtx((), (), x, bview)))
        else:
            raise ExecutionError(f"cannot execute {type(ins).__name__}")
    flush()
    return ExecutionResult(outputs, bindings, events, sim)
