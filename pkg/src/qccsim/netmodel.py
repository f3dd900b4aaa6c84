"""Network model for multiparty protocols with fixed communication patterns.

A protocol is a flat instruction list over globally named registers.  Parties
are integers: 0 is the coordinator (when the topology has one), players are
1..k.  The qubit cost of a protocol charges every `Send` its register width;
per-party cost charges a send to both endpoints.

Obliviousness is structural here: the instruction list — allocations, sends,
measurement positions — is fixed before any input is chosen.  Everything that
may depend on inputs, shared randomness, or measurement outcomes lives inside
the callables carried by `LocalOp` and `OutputBind`, which can change
amplitudes but never which qubits move where.  `derive_schedule` therefore
reads the communication pattern straight off the program; `verify_oblivious`
cross-checks that executions agree with it input by input.

Round numbers on sends are labels for accounting (cost per round, round
count); the causal order of a program is always instruction order.  Labels
need not be monotone in instruction order, which lets model conversions
renumber rounds without reordering instructions.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field


class MalformedProgramError(Exception):
    """Program violates the structural rules (ownership, rounds, bindings...)."""


# ---------------------------------------------------------------------------
# topology

@dataclass(frozen=True)
class Topology:
    """Party layout: `num_players` players 1..k, plus party 0 if `coordinator`."""

    num_players: int
    coordinator: bool = True

    def parties(self) -> tuple[int, ...]:
        first = 0 if self.coordinator else 1
        return tuple(range(first, self.num_players + 1))

    def has_party(self, p: int) -> bool:
        lo = 0 if self.coordinator else 1
        return lo <= p <= self.num_players


# ---------------------------------------------------------------------------
# instructions

@dataclass(frozen=True)
class Alloc:
    name: str
    party: int
    width: int


@dataclass(frozen=True)
class Release:
    name: str


@dataclass(frozen=True)
class LocalOp:
    """A local operation by one party on registers it owns.

    `kind` selects the effect type the `make` callable must produce when the
    executor calls it with an effect context (`ctx.widths`, `ctx.params`,
    `ctx.x`, `ctx.bindings`):

    * ``"map"``     -> int table of length 2^w, a bijection on labels
    * ``"phase"``   -> bool mask of length 2^w (True = flip sign)
    * ``"unitary"`` -> dense (2^w, 2^w) unitary
    * ``"single"``  -> 2x2 unitary applied at `offset` of the one register

    Register sets order low bits first.  `input_of` names the party whose
    input string `ctx.x` exposes; `reads` lists binding names the callable
    consults.  Ops with no `reads` are resolved once per execution.
    """

    party: int
    kind: str
    regs: tuple
    make: object
    params: tuple = ()
    input_of: int | None = None
    reads: tuple = ()
    offset: int = 0
    label: str = ""


@dataclass(frozen=True)
class Send:
    """Move register `reg` from `src` to `dst` in communication round `round`.

    `condition` must be None for a well-formed program; a callable here makes
    the send depend on bindings, which breaks obliviousness and is rejected by
    `derive_schedule`.  The executor honours it so that such programs can be
    exhibited and caught dynamically.
    """

    src: int
    dst: int
    reg: str
    round: int
    condition: object = None


@dataclass(frozen=True)
class Measure:
    party: int
    reg: str
    bind: str


@dataclass(frozen=True)
class SharedRandom:
    """Publish `width` shared random bits to all parties as binding `bind`."""

    bind: str
    width: int


@dataclass(frozen=True)
class OutputBind:
    """Party's classical output: `fn(ctx)` -> int, reading bindings/input."""

    party: int
    fn: object
    reads: tuple = ()
    input_of: int | None = None


INSTRUCTION_TYPES = (Alloc, Release, LocalOp, Send, Measure, SharedRandom, OutputBind)


# ---------------------------------------------------------------------------
# programs

@dataclass
class ProtocolProgram:
    """An instruction list plus the input contract.

    `input_widths` maps a party to the bit width the caller must supply.
    `input_map` resolves *virtual* party inputs (the indices `input_of`
    refers to) from supplied ones; entries are ``("input", party, lo, hi)``
    for a slice of a supplied string or ``("const", bits)`` for a fixed
    string.  Parties absent from the map resolve to their own input.
    Model conversions and player merges rewrite this map so the carried
    callables never need editing.
    """

    topology: Topology
    instructions: tuple
    input_widths: dict = field(default_factory=dict)
    input_map: dict = field(default_factory=dict)
    name: str = ""

    def replace(self, **kw) -> "ProtocolProgram":
        return dataclasses.replace(self, **kw)

    def resolve_input(self, virtual_party: int, inputs: dict) -> str:
        spec = self.input_map.get(
            virtual_party, ("input", virtual_party, 0, None))
        if spec[0] == "const":
            return spec[1]
        _, party, lo, hi = spec
        if party not in inputs:
            raise KeyError(f"no input supplied for party {party}")
        x = inputs[party]
        return x[lo:hi] if hi is not None else x[lo:]


class ProgramBuilder:
    """Incremental construction of a ProtocolProgram."""

    def __init__(self, topology: Topology, name: str = ""):
        self.topology = topology
        self.name = name
        self._ins: list = []
        self.input_widths: dict = {}

    def declare_input(self, party: int, width: int):
        self.input_widths[party] = width
        return self

    def alloc(self, name: str, party: int, width: int):
        self._ins.append(Alloc(name, party, width))
        return self

    def release(self, name: str):
        self._ins.append(Release(name))
        return self

    def local(self, party, kind, regs, make, params=(), input_of=None,
              reads=(), offset=0, label=""):
        self._ins.append(LocalOp(party, kind, tuple(regs), make, tuple(params),
                                 input_of, tuple(reads), offset, label))
        return self

    def send(self, src, dst, reg, rnd, condition=None):
        self._ins.append(Send(src, dst, reg, rnd, condition))
        return self

    def measure(self, party, reg, bind):
        self._ins.append(Measure(party, reg, bind))
        return self

    def shared_random(self, bind, width):
        self._ins.append(SharedRandom(bind, width))
        return self

    def output(self, party, fn, reads=(), input_of=None):
        self._ins.append(OutputBind(party, fn, tuple(reads), input_of))
        return self

    def build(self) -> ProtocolProgram:
        return ProtocolProgram(self.topology, tuple(self._ins),
                               dict(self.input_widths), {}, self.name)


# ---------------------------------------------------------------------------
# validation and schedule derivation

def validate_program(program: ProtocolProgram, allow_conditional=False) -> dict:
    """Structural checks; returns the register width table.

    Tracks ownership through sends, register lifetimes through alloc/release,
    and binding definitions through measures and shared randomness.  Raises
    MalformedProgramError on the first violation.
    """
    topo = program.topology
    owner: dict[str, int] = {}
    width: dict[str, int] = {}
    all_widths: dict[str, int] = {}
    binds: set[str] = set()

    def party_ok(p, what):
        if not topo.has_party(p):
            raise MalformedProgramError(f"{what}: no party {p} in topology")

    for i, ins in enumerate(program.instructions):
        where = f"instruction {i} ({type(ins).__name__})"
        if isinstance(ins, Alloc):
            party_ok(ins.party, where)
            if ins.name in owner:
                raise MalformedProgramError(f"{where}: register {ins.name!r} already live")
            if ins.width <= 0:
                raise MalformedProgramError(f"{where}: width must be positive")
            owner[ins.name] = ins.party
            width[ins.name] = ins.width
            all_widths[ins.name] = ins.width
        elif isinstance(ins, Release):
            if ins.name not in owner:
                raise MalformedProgramError(f"{where}: register {ins.name!r} not live")
            del owner[ins.name]
            del width[ins.name]
        elif isinstance(ins, LocalOp):
            party_ok(ins.party, where)
            if ins.kind not in ("map", "phase", "unitary", "single"):
                raise MalformedProgramError(f"{where}: unknown kind {ins.kind!r}")
            if ins.kind == "single" and len(ins.regs) != 1:
                raise MalformedProgramError(f"{where}: 'single' takes one register")
            for r in ins.regs:
                if r not in owner:
                    raise MalformedProgramError(f"{where}: register {r!r} not live")
                if owner[r] != ins.party:
                    raise MalformedProgramError(
                        f"{where}: register {r!r} owned by party {owner[r]}, "
                        f"not {ins.party}")
            for b in ins.reads:
                if b not in binds:
                    raise MalformedProgramError(f"{where}: binding {b!r} not yet defined")
        elif isinstance(ins, Send):
            party_ok(ins.src, where)
            party_ok(ins.dst, where)
            if ins.src == ins.dst:
                raise MalformedProgramError(f"{where}: send to self")
            if ins.reg not in owner:
                raise MalformedProgramError(f"{where}: register {ins.reg!r} not live")
            if owner[ins.reg] != ins.src:
                raise MalformedProgramError(
                    f"{where}: register {ins.reg!r} owned by party "
                    f"{owner[ins.reg]}, not sender {ins.src}")
            if ins.round < 1:
                raise MalformedProgramError(f"{where}: round must be >= 1")
            if ins.condition is not None and not allow_conditional:
                raise MalformedProgramError(
                    f"{where}: conditional send breaks the fixed pattern")
            owner[ins.reg] = ins.dst
        elif isinstance(ins, Measure):
            party_ok(ins.party, where)
            if ins.reg not in owner:
                raise MalformedProgramError(f"{where}: register {ins.reg!r} not live")
            if owner[ins.reg] != ins.party:
                raise MalformedProgramError(
                    f"{where}: register {ins.reg!r} owned by party "
                    f"{owner[ins.reg]}, not {ins.party}")
            binds.add(ins.bind)
        elif isinstance(ins, SharedRandom):
            if ins.width <= 0:
                raise MalformedProgramError(f"{where}: width must be positive")
            binds.add(ins.bind)
        elif isinstance(ins, OutputBind):
            party_ok(ins.party, where)
            for b in ins.reads:
                if b not in binds:
                    raise MalformedProgramError(f"{where}: binding {b!r} not yet defined")
        else:
            raise MalformedProgramError(f"{where}: unknown instruction")
    if program.instructions:
        bound = {ins.party for ins in program.instructions
                 if isinstance(ins, OutputBind)}
        missing = [p for p in topo.parties()
                   if p != 0 and p not in bound]
        if missing:
            raise MalformedProgramError(
                f"missing output for players {missing}: every input-holding "
                f"party must bind one")
    return all_widths


@dataclass(frozen=True)
class TransmissionEvent:
    round: int
    src: int
    dst: int
    reg: str
    width: int

    def pattern(self) -> tuple:
        return (self.round, self.src, self.dst, self.width)


class CostLedger:
    """Qubit-count accounting over a sequence of transmission events."""

    def __init__(self, events):
        self.events = [e.pattern() if isinstance(e, TransmissionEvent) else tuple(e)
                       for e in events]
        self.qcc = sum(w for _, _, _, w in self.events)
        self.round_labels = sorted({r for r, _, _, _ in self.events})
        self.rounds = len(self.round_labels)

    def qcc_per_party(self, party: int) -> int:
        """Qubits crossing party's boundary: sends where it is an endpoint."""
        return sum(w for _, s, d, w in self.events if party in (s, d))

    def width_by_round(self) -> dict:
        out: dict[int, int] = {}
        for r, _, _, w in self.events:
            out[r] = out.get(r, 0) + w
        return out

    def as_dict(self) -> dict:
        return {
            "qcc": self.qcc,
            "rounds": self.rounds,
            "events": [list(e) for e in self.events],
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class Schedule:
    """The static communication pattern of a program."""

    def __init__(self, topology: Topology, events: list[TransmissionEvent],
                 name: str = "", meta: dict | None = None):
        self.topology = topology
        self.events = list(events)
        self.name = name
        self.meta = dict(meta or {})

    def ledger(self) -> CostLedger:
        return CostLedger(self.events)

    def pattern(self) -> tuple:
        return tuple(e.pattern() for e in self.events)

    def to_json(self) -> str:
        meta = {"name": self.name, **self.meta}
        return json.dumps({
            "topology": ("coordinator" if self.topology.coordinator
                         else "point-to-point"),
            "k": self.topology.num_players,
            "rounds": [
                {"round": e.round, "from": e.src, "to": e.dst,
                 "count": e.width, "register": e.reg}
                for e in self.events
            ],
            "meta": meta,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        d = json.loads(text)
        events = [TransmissionEvent(e["round"], e["from"], e["to"],
                                    e["register"], e["count"])
                  for e in d["rounds"]]
        meta = dict(d.get("meta", {}))
        name = meta.pop("name", "")
        return cls(Topology(d["k"], d["topology"] == "coordinator"),
                   events, name, meta)


def derive_schedule(program: ProtocolProgram) -> Schedule:
    """Read the communication pattern off the instruction list.

    Only well-formed oblivious programs have one; conditional sends raise
    MalformedProgramError.
    """
    widths = validate_program(program, allow_conditional=False)
    events = [TransmissionEvent(ins.round, ins.src, ins.dst, ins.reg,
                                widths[ins.reg])
              for ins in program.instructions if isinstance(ins, Send)]
    return Schedule(program.topology, events, program.name)


def program_qcc(program: ProtocolProgram) -> int:
    return derive_schedule(program).ledger().qcc


# ---------------------------------------------------------------------------
# model conversions

def to_coordinator(program: ProtocolProgram) -> ProtocolProgram:
    """Route every player-to-player send through a coordinator.

    Each send i->j in round r becomes i->0 then 0->j, both labelled round r,
    so the converted cost is exactly twice the original and the round count is
    unchanged.  Outputs are bit-identical for a given seed: measurements and
    shared-randomness draws are untouched and stay in the same order.
    """
    if program.topology.coordinator:
        raise ValueError("program already has a coordinator")
    ins_out: list = []
    for ins in program.instructions:
        if isinstance(ins, Send):
            ins_out.append(Send(ins.src, 0, ins.reg, ins.round, ins.condition))
            ins_out.append(Send(0, ins.dst, ins.reg, ins.round, ins.condition))
        else:
            ins_out.append(ins)
    topo = Topology(program.topology.num_players, coordinator=True)
    return program.replace(topology=topo, instructions=tuple(ins_out),
                           name=(program.name + "-co") if program.name else "")


def to_point_to_point(program: ProtocolProgram) -> ProtocolProgram:
    """Eliminate the coordinator by letting player 1 absorb it.

    Party 0's instructions run at party 1; sends between 0 and 1 become
    internal and are dropped.  A round r splits into up to two: traffic toward
    the old coordinator lands in round 2r-1, traffic from it in round 2r, and
    labels are then renumbered compactly — so a program with M rounds converts
    to one with at most 2M.  Party 0's output binding is retargeted to player
    1 unless player 1 already has one.
    """
    if not program.topology.coordinator:
        raise ValueError("program has no coordinator")
    p1_has_output = any(isinstance(i, OutputBind) and i.party == 1
                        for i in program.instructions)

    def remap(p):
        return 1 if p == 0 else p

    ins_out: list = []
    for ins in program.instructions:
        if isinstance(ins, Send):
            src, dst = remap(ins.src), remap(ins.dst)
            if src == dst:
                continue
            rnd = 2 * ins.round if ins.src == 0 else 2 * ins.round - 1
            ins_out.append(Send(src, dst, ins.reg, rnd, ins.condition))
        elif isinstance(ins, Alloc):
            ins_out.append(Alloc(ins.name, remap(ins.party), ins.width))
        elif isinstance(ins, LocalOp):
            ins_out.append(dataclasses.replace(ins, party=remap(ins.party)))
        elif isinstance(ins, Measure):
            ins_out.append(dataclasses.replace(ins, party=remap(ins.party)))
        elif isinstance(ins, OutputBind):
            if ins.party == 0:
                if p1_has_output:
                    continue
                ins_out.append(dataclasses.replace(ins, party=1))
            else:
                ins_out.append(ins)
        else:
            ins_out.append(ins)

    labels = sorted({i.round for i in ins_out if isinstance(i, Send)})
    renum = {r: k + 1 for k, r in enumerate(labels)}
    ins_out = [dataclasses.replace(i, round=renum[i.round])
               if isinstance(i, Send) else i for i in ins_out]
    topo = Topology(program.topology.num_players, coordinator=False)
    return program.replace(topology=topo, instructions=tuple(ins_out),
                           name=(program.name + "-p2p") if program.name else "")


# ---------------------------------------------------------------------------
# obliviousness check

@dataclass(frozen=True)
class ObliviousnessReport:
    """Outcome of comparing realized communication patterns across runs.

    `ok` is True when every execution produced the same event multiset (and
    sequence) and it matched the statically derived schedule where one
    exists.  `divergence` holds a human-readable description of the first
    mismatch otherwise.  Truth value follows `ok`.
    """

    ok: bool
    executions: int
    divergence: str | None = None

    def __bool__(self):
        return self.ok


def verify_oblivious(program: ProtocolProgram, inputs_list, seed: int = 0,
                     trials_per_input: int = 1) -> ObliviousnessReport:
    """Check that the realized communication pattern never varies.

    Executes the program on every supplied input assignment (over a few seeds
    per input), collecting the runtime sequence of (round, src, dst, width)
    events.  All runs must agree as multisets (and they are also compared as
    sequences, which is stronger), and must match the statically derived
    schedule when the program has one.  A divergence is reported, not raised.
    """
    from . import engine  # local import: engine depends on this module

    try:
        static = derive_schedule(program).pattern()
    except MalformedProgramError:
        static = None
    base = base_inputs = None
    runs = 0
    for inputs in inputs_list:
        for t in range(trials_per_input):
            res = engine.execute(program, inputs, seed=seed + 7919 * t)
            pat = tuple(e.pattern() for e in res.events)
            runs += 1
            if base is None:
                base, base_inputs = pat, inputs
            elif sorted(pat) != sorted(base):
                a, b = sorted(base), sorted(pat)
                at = next(i for i in range(max(len(a), len(b)))
                          if i >= len(a) or i >= len(b) or a[i] != b[i])
                return ObliviousnessReport(
                    False, runs,
                    f"event multiset for inputs {inputs} differs from "
                    f"{base_inputs} at sorted position {at}: "
                    f"{b[at] if at < len(b) else 'missing'} vs "
                    f"{a[at] if at < len(a) else 'missing'}")
            elif pat != base:
                return ObliviousnessReport(
                    False, runs,
                    f"event order for inputs {inputs} differs from "
                    f"{base_inputs} (same multiset)")
    if static is not None and base is not None and sorted(static) != sorted(base):
        return ObliviousnessReport(
            False, runs, "runtime events do not match the derived schedule")
    return ObliviousnessReport(True, runs)
