"""Builders for the shipped coordinator-model protocols.

Every builder returns an oblivious ProtocolProgram (or, for the
amplitude-amplification cost model, a bare Schedule): the instruction list,
send widths, and round labels are fixed at construction time, and anything
input- or outcome-dependent lives inside local map callables and output
bindings.  Communication costs therefore have closed forms, exposed next to
each builder so tests and the CLI can check derived schedules against them
exactly.

The quantum workhorse is the distributed query gadget: four rounds that
compute y ^= x_1[i] & ... & x_k[i] on the coordinator's index register, at
4k*ceil(log2 n) + 2k qubits per invocation.  Disjointness wraps it in a
Grover search with a randomized iteration schedule (the solution count is
unknown), a classical per-round verification query, and a final broadcast;
the symmetric-function protocol runs iterative phase estimation on the
Grover step to count the intersection weight instead of finding a witness.

Conventions used by all builders here:
  * the coordinator is party 0, players are 1..k, player g's input is the
    n-bit string x_g with coordinate i at x_g[i];
  * answer broadcast: the coordinator writes the final bit into one fresh
    qubit per player and sends them in one round (k qubits, counted);
  * shared-randomness draws are consumed in instruction order, one draw per
    SharedRandom instruction, which is what lets tests enumerate them.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import statevec as sv
from .functions import (l0, l1, payload_width, rank_small_subset, split_D,
                        unrank_small_subset, zero_positions)
from .netmodel import ProgramBuilder, Schedule, Topology, TransmissionEvent


def _log2ceil(n):
    if n < 2:
        raise ValueError("need n >= 2")
    return (n - 1).bit_length()


def gadget_cost(n, k):
    """Qubits one query-gadget invocation transmits: 4k*ceil(log2 n) + 2k."""
    return 4 * k * _log2ceil(n) + 2 * k


def verification_cost(n, k):
    """Qubits one classical candidate check transmits: 2k(ceil(log2 n)+1)."""
    return 2 * k * (_log2ceil(n) + 1)


@dataclass(frozen=True)
class GroverPlan:
    """Iteration schedule for Grover search with unknown solution count.

    Round t runs `ms[t-1]` oracle invocations, of which a shared-random
    j < ms[t-1] are live and the rest are no-ops, then measures and checks a
    candidate.  `budget` = sum(ms); a round is critical once ms[t] reaches
    1/sin(2*theta_1) (single-solution worst case), giving success >= 1/4.
    """

    n: int
    npow: int
    L: int
    eps: float
    ms: tuple
    critical: int

    @property
    def budget(self):
        return sum(self.ms)

    @property
    def rounds(self):
        return len(self.ms)


def grover_plan(n, eps=1 / 3):
    """The randomized-doubling schedule: caps per round at ceil((pi/4)sqrt(n)),
    grows as ceil((6/5)^t), stops after ceil(log eps / log 3/4) critical
    rounds or when the next round would exceed 3*ceil(sqrt(n)) iterations."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must be in (0, 1/2)")
    npow = 1 << _log2ceil(n)
    L = _log2ceil(n)
    cap_per_round = math.ceil(math.pi / 4 * math.sqrt(npow))
    cap_total = 3 * math.ceil(math.sqrt(npow))
    m_critical = 1 / math.sin(2 * math.asin(1 / math.sqrt(npow)))
    need = math.ceil(math.log(eps) / math.log(3 / 4))
    ms, critical, t = [], 0, 1
    while critical < need:
        m = min(math.ceil(1.2 ** t), cap_per_round)
        if sum(ms) + m > cap_total:
            break
        ms.append(m)
        if m >= m_critical:
            critical += 1
        t += 1
    return GroverPlan(n, npow, L, eps, tuple(ms), critical)


def disj_cost(n, k, eps=1 / 3):
    """Total qubits of build_disj_grover's schedule (closed form)."""
    p = grover_plan(n, eps)
    return p.budget * gadget_cost(n, k) + p.rounds * verification_cost(n, k) + k


def disj_round_count(n, k, eps=1 / 3):
    p = grover_plan(n, eps)
    return 4 * p.budget + 4 * p.rounds + 1


def bounded_round_cost(n, k, M, eps=1 / 3):
    """ceil(n/M^2) lockstep blocks of the M^2-bit instance, plus broadcast."""
    blocks = -(-n // (M * M))
    nb = M * M
    p = grover_plan(nb, eps)
    per_block = p.budget * gadget_cost(nb, k) + p.rounds * verification_cost(nb, k)
    return blocks * per_block + k


def bounded_round_count(n, k, M, eps=1 / 3):
    p = grover_plan(M * M, eps)
    return 4 * p.budget + 4 * p.rounds + 1


def equality_cost(k, c=2):
    return c * k + k


def counting_phase_bits(n, weight_bound):
    """Phase-register width for exact counting up to `weight_bound`."""
    return math.ceil((6 + math.log2(n * (weight_bound + 1))) / 2 - 1e-12) + 2


def disj_peak_width(n, k, M=None):
    """Largest simulator factor build_disj_grover (or the M-round variant)
    ever forms: one block's index, copies, answer bits, and target."""
    block = n if M is None else M * M
    L = _log2ceil(block)
    return L + 1 + k * (L + 1)


def symmetric_peak_width(spec):
    a, b = l0(spec.d), l1(spec.d)
    wide = 1
    if b > 0:
        wide = 1 + payload_width(spec.n, b)
    if a > 0:
        L = _log2ceil(spec.n)
        wide = max(wide, L + 2 + spec.k * (L + 1))
    return wide


def equality_peak_width(n, c=2, method="ip"):
    if method == "polynomial":
        return _next_prime_above(3 * n).bit_length()
    return c


def symmetric_cost(spec, eps=1 / 3):
    """Total qubits of build_symmetric's schedule (closed form)."""
    a, b = l0(spec.d), l1(spec.d)
    total = spec.k
    if b > 0:
        total += spec.k * (1 + payload_width(spec.n, b))
    if a > 0:
        p = counting_phase_bits(spec.n, a)
        total += ((1 << p) - 1) * gadget_cost(spec.n, spec.k)
    return total


# ---------------------------------------------------------------------------
# effect tables.  Register sets order low bits first, so for regs (u, v) the
# label is u + (v << width(u)).

def _gate_x(ctx):
    return sv.X


def _gate_h(ctx):
    return sv.H


def _xor_fanout(ctx):
    # (src w, dst w): dst ^= src
    w = ctx.widths[0]
    lab = np.arange(1 << (2 * w), dtype=np.int64)
    return lab ^ ((lab & ((1 << w) - 1)) << w)


def _indexed_bit_write(ctx):
    # (copy L, xbit): xbit ^= x[lo + copy], zero past the end of the slice
    lo, hi = ctx.params
    w = ctx.widths[0]
    piece = ctx.x[lo:hi]
    bit_at = np.zeros(1 << w, dtype=np.int64)
    for j, ch in enumerate(piece):
        bit_at[j] = 1 if ch == "1" else 0
    lab = np.arange(1 << (w + 1), dtype=np.int64)
    return lab ^ (bit_at[lab & ((1 << w) - 1)] << w)


def _and_collect(ctx):
    # (x_1..x_k, y): y ^= AND(x_g)
    k = len(ctx.widths) - 1
    lab = np.arange(1 << (k + 1), dtype=np.int64)
    full = (1 << k) - 1
    return lab ^ (((lab & full) == full).astype(np.int64) << k)


def _controlled_and_collect(ctx):
    # (ctrl, x_1..x_k, y): y ^= ctrl & AND(x_g)
    k = len(ctx.widths) - 2
    lab = np.arange(1 << (k + 2), dtype=np.int64)
    xmask = ((1 << k) - 1) << 1
    hit = ((lab & xmask) == xmask) & ((lab & 1) == 1)
    return lab ^ (hit.astype(np.int64) << (k + 1))


def _gated_and_collect(ctx):
    # like _and_collect, but a no-op unless this invocation is live
    bind, g_iter, m_t = ctx.params
    if g_iter < ctx.bindings[bind] % m_t:
        return _and_collect(ctx)
    return np.arange(1 << ctx.total_width, dtype=np.int64)


def _diffusion_flip(ctx):
    # sign flip away from |0..0> — together with H layers: 2|u><u| - I
    return np.arange(1 << ctx.widths[0]) != 0


def _gated_diffusion_flip(ctx):
    bind, g_iter, m_t = ctx.params
    size = 1 << ctx.widths[0]
    if g_iter < ctx.bindings[bind] % m_t:
        return np.arange(size) != 0
    return np.zeros(size, dtype=bool)


def _controlled_diffusion_flip(ctx):
    # (ctrl, idx): flip where ctrl = 1 and idx != 0
    lab = np.arange(1 << (1 + ctx.widths[1]))
    return ((lab & 1) == 1) & ((lab >> 1) != 0)


def _xor_binding(ctx):
    # XOR a measured/shared value into the register (also resets it to |0>)
    value = int(ctx.bindings[ctx.params[0]])
    w = ctx.widths[0]
    return np.arange(1 << w, dtype=np.int64) ^ (value & ((1 << w) - 1))


def _phase_feedback(ctx):
    # iterative-phase-estimation correction: diag(1, e^{-2*pi*i*omega})
    omega = sum(ctx.bindings[bind] * 2.0 ** -power
                for bind, power in ctx.params)
    return sv.rz(-2 * math.pi * omega)


def _ip_fingerprint(ctx):
    # (fp c,): fp_l = <x, r_l> mod 2 for the shared strings named in params
    val = 0
    xint = sum(1 << i for i, ch in enumerate(ctx.x) if ch == "1")
    for l, bind in enumerate(ctx.params):
        val |= (bin(xint & ctx.bindings[bind]).count("1") & 1) << l
    return np.arange(1 << len(ctx.params), dtype=np.int64) ^ val


def _poly_fingerprint(ctx):
    # (fp w,): evaluate p_x at the shared point over F_m (Horner)
    modulus, bind = ctx.params
    a = ctx.bindings[bind] % modulus
    val = 0
    for ch in reversed(ctx.x):
        val = (val * a + (1 if ch == "1" else 0)) % modulus
    return np.arange(1 << ctx.widths[0], dtype=np.int64) ^ val


def _zero_report_write(ctx):
    # (flag, [payload]): flag = "fewer than `bound` zeros", payload = the
    # ranked zero set when the flag is up, zeros otherwise (fixed width
    # either way — the pattern must not depend on the input)
    n, bound = ctx.params
    zeros = zero_positions(ctx.x)
    flag = 1 if len(zeros) < bound else 0
    val = flag
    if len(ctx.widths) > 1 and flag:
        val |= rank_small_subset(zeros, n) << 1
    return np.arange(1 << ctx.total_width, dtype=np.int64) ^ val


def _h_all(ctx):
    u = sv.H
    for _ in range(ctx.widths[0] - 1):
        u = np.kron(sv.H, u)
    return u


def _h_layer(b, party, reg, width):
    if width == 1:
        b.local(party, "single", (reg,), _gate_h)
    else:
        b.local(party, "unitary", (reg,), _h_all)


def _answer_write(fn):
    def make(ctx):
        return np.arange(2, dtype=np.int64) ^ int(fn(ctx))
    return make


def _read_bind(name):
    def fn(ctx):
        return ctx.bindings[name]
    return fn


def _broadcast_answer(b, k, rnd, fn, reads):
    """Coordinator computes the final bit and ships it to every player."""
    for g in range(1, k + 1):
        ans = f"ans{g}"
        b.alloc(ans, 0, 1)
        b.local(0, "map", (ans,), _answer_write(fn), reads=reads)
        b.send(0, g, ans, rnd)
        b.measure(g, ans, f"out{g}")
        b.output(g, _read_bind(f"out{g}"), reads=(f"out{g}",))
    b.output(0, fn, reads=reads)


# ---------------------------------------------------------------------------
# the distributed query gadget

class QueryGadget:
    """Composable fragment computing y ^= x_1[i] & ... & x_k[i].

    attach() allocates the travel registers (one log-n index copy per player
    at the coordinator, one answer qubit per player at that player); invoke()
    emits one four-round query.  The registers end every invocation where
    they started and in |0>, so a program attaches once and invokes as often
    as it likes; the classical verification query reuses them too.
    """

    def __init__(self, n, k):
        if n < 2:
            raise ValueError("need n >= 2")
        self.n = n
        self.k = k
        self.L = _log2ceil(n)
        self.npow = 1 << self.L
        self.cost = gadget_cost(n, k)
        self.rounds = 4

    def attach(self, b, idx, y, prefix="q", lo=0, hi=None):
        self.idx, self.y = idx, y
        self.lo, self.hi = lo, (hi if hi is not None else lo + self.n)
        self.copies = tuple(f"{prefix}c{g}" for g in range(1, self.k + 1))
        self.xbits = tuple(f"{prefix}x{g}" for g in range(1, self.k + 1))
        for g in range(1, self.k + 1):
            b.alloc(self.copies[g - 1], 0, self.L)
            b.alloc(self.xbits[g - 1], g, 1)
        return self

    def invoke(self, b, rnd, oracle=None, reads=(), params=(), control=None):
        """One query: fan out, player replies, collect, clean up.

        `oracle`/`reads`/`params` override the coordinator's collect map
        (used to gate it on shared randomness); `control` names an extra
        low qubit prepended to the collect registers.
        """
        k = self.k
        for g in range(k):
            b.local(0, "map", (self.idx, self.copies[g]), _xor_fanout)
            b.send(0, g + 1, self.copies[g], rnd)
        for g in range(k):
            b.local(g + 1, "map", (self.copies[g], self.xbits[g]),
                    _indexed_bit_write, params=(self.lo, self.hi),
                    input_of=g + 1)
            b.send(g + 1, 0, self.copies[g], rnd + 1)
            b.send(g + 1, 0, self.xbits[g], rnd + 1)
        collect_regs = self.xbits + (self.y,)
        if control is not None:
            collect_regs = (control,) + collect_regs
            default = _controlled_and_collect
        else:
            default = _and_collect
        b.local(0, "map", collect_regs, oracle or default,
                reads=reads, params=params)
        for g in range(k):
            b.send(0, g + 1, self.copies[g], rnd + 2)
            b.send(0, g + 1, self.xbits[g], rnd + 2)
        for g in range(k):
            b.local(g + 1, "map", (self.copies[g], self.xbits[g]),
                    _indexed_bit_write, params=(self.lo, self.hi),
                    input_of=g + 1)
            b.send(g + 1, 0, self.copies[g], rnd + 3)
        for g in range(k):
            b.local(0, "map", (self.idx, self.copies[g]), _xor_fanout)
        return rnd + 4

    def verify(self, b, rnd, cand_bind, verd_binds):
        """Classical candidate check: write the measured index into the
        copies, let players answer with their bit, measure, restore."""
        k = self.k
        for g in range(k):
            b.local(0, "map", (self.copies[g],), _xor_binding,
                    reads=(cand_bind,), params=(cand_bind,))
            b.send(0, g + 1, self.copies[g], rnd)
        for g in range(k):
            b.local(g + 1, "map", (self.copies[g], self.xbits[g]),
                    _indexed_bit_write, params=(self.lo, self.hi),
                    input_of=g + 1)
            b.send(g + 1, 0, self.xbits[g], rnd + 1)
        for g in range(k):
            b.measure(0, self.xbits[g], verd_binds[g])
        for g in range(k):
            b.send(0, g + 1, self.xbits[g], rnd + 2)
        for g in range(k):
            b.local(g + 1, "map", (self.copies[g], self.xbits[g]),
                    _indexed_bit_write, params=(self.lo, self.hi),
                    input_of=g + 1)
            b.send(g + 1, 0, self.copies[g], rnd + 3)
        for g in range(k):
            b.local(0, "map", (self.copies[g],), _xor_binding,
                    reads=(cand_bind,), params=(cand_bind,))
        return rnd + 4

    def release(self, b):
        for r in self.copies + self.xbits:
            b.release(r)

    def as_program(self):
        """A one-invocation wrapper program, for schedule inspection."""
        k = self.k
        b = ProgramBuilder(Topology(k, True), f"query-gadget-n{self.n}k{k}")
        for g in range(1, k + 1):
            b.declare_input(g, self.n)
        b.alloc("idx", 0, self.L)
        b.alloc("y", 0, 1)
        self.attach(b, "idx", "y")
        _h_layer(b, 0, "idx", self.L)
        self.invoke(b, 1)
        b.measure(0, "idx", "i")
        b.measure(0, "y", "hit")
        b.local(0, "map", ("idx",), _xor_binding, reads=("i",), params=("i",))
        b.local(0, "map", ("y",), _xor_binding, reads=("hit",), params=("hit",))
        self.release(b)
        b.release("idx")
        b.release("y")
        for g in range(1, k + 1):
            b.output(g, lambda ctx: 0)
        b.output(0, _read_bind("hit"), reads=("hit",))
        return b.build()


def build_query_gadget(n, k):
    return QueryGadget(n, k)


# ---------------------------------------------------------------------------
# equality

def _next_prime_above(v):
    c = v + 1
    while True:
        if c > 2 and c % 2 == 0:
            c += 1
            continue
        if all(c % d for d in range(3, int(math.isqrt(c)) + 1, 2)):
            return c
        c += 1


def build_equality(n, k, c=2, method="ip"):
    """Fingerprint equality: players hash their strings with shared
    randomness, the coordinator accepts iff all fingerprints agree.

    The "ip" method sends c inner-product bits per player (cost ck + k,
    one-sided with error 2^-c on any unequal pair).  The "polynomial"
    method evaluates the input polynomial at a shared point of the field
    of the smallest prime above 3n (cost k*ceil(log2 m) + k).
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    b = ProgramBuilder(Topology(k, True), f"equality-n{n}k{k}{method}{c}")
    for g in range(1, k + 1):
        b.declare_input(g, n)
    if method == "ip":
        rbinds = tuple(f"r{l}" for l in range(1, c + 1))
        for r in rbinds:
            b.shared_random(r, n)
        width, make, params = c, _ip_fingerprint, rbinds
    elif method == "polynomial":
        modulus = _next_prime_above(3 * n)
        b.shared_random("a", max(1, modulus.bit_length()))
        rbinds = ("a",)
        width, make, params = modulus.bit_length(), _poly_fingerprint, (modulus, "a")
    else:
        raise ValueError(f"unknown method {method!r}")
    for g in range(1, k + 1):
        b.alloc(f"fp{g}", g, width)
        b.local(g, "map", (f"fp{g}",), make, params=params,
                input_of=g, reads=rbinds)
        b.send(g, 0, f"fp{g}", 1)
    fp_binds = tuple(f"fp{g}" for g in range(1, k + 1))
    for g in range(1, k + 1):
        b.measure(0, f"fp{g}", f"fp{g}")

    def agree(ctx):
        return 1 if len({ctx.bindings[f] for f in fp_binds}) == 1 else 0

    _broadcast_answer(b, k, 2, agree, fp_binds)
    for g in range(1, k + 1):
        b.local(0, "map", (f"fp{g}",), _xor_binding,
                reads=(f"fp{g}",), params=(f"fp{g}",))
        b.release(f"fp{g}")
    return b.build()


# ---------------------------------------------------------------------------
# disjointness by Grover search (and its bounded-round block split)

def _grover_disj(name, n, k, eps, block_bits):
    blocks = -(-n // block_bits)
    plan = grover_plan(block_bits, eps)
    L = plan.L
    b = ProgramBuilder(Topology(k, True), name)
    for g in range(1, k + 1):
        b.declare_input(g, n)
    gads, idxs, ys = [], [], []
    for i in range(blocks):
        idx, y = f"idx{i}", f"y{i}"
        b.alloc(idx, 0, L)
        b.alloc(y, 0, 1)
        b.local(0, "single", (y,), _gate_x)
        b.local(0, "single", (y,), _gate_h)
        _h_layer(b, 0, idx, L)
        gad = QueryGadget(block_bits, k).attach(
            b, idx, y, prefix=f"b{i}", lo=i * block_bits)
        gads.append(gad)
        idxs.append(idx)
        ys.append(y)
    rnd = 1
    verd_names = []
    for t, m_t in enumerate(plan.ms, start=1):
        jbs = [f"j{t}b{i}" for i in range(blocks)]
        for jb in jbs:
            b.shared_random(jb, 8)
        for it in range(m_t):
            start = rnd
            for i in range(blocks):
                gads[i].invoke(b, start, oracle=_gated_and_collect,
                               reads=(jbs[i],), params=(jbs[i], it, m_t))
                _h_layer(b, 0, idxs[i], L)
                b.local(0, "phase", (idxs[i],), _gated_diffusion_flip,
                        reads=(jbs[i],), params=(jbs[i], it, m_t))
                _h_layer(b, 0, idxs[i], L)
            rnd = start + 4
        start = rnd
        for i in range(blocks):
            cand = f"cand{t}b{i}"
            b.measure(0, idxs[i], cand)
            verd = tuple(f"verd{t}b{i}g{g}" for g in range(1, k + 1))
            verd_names.extend(verd)
            gads[i].verify(b, start, cand, verd)
        rnd = start + 4
        if t < plan.rounds:
            for i in range(blocks):
                b.local(0, "map", (idxs[i],), _xor_binding,
                        reads=(f"cand{t}b{i}",), params=(f"cand{t}b{i}",))
                _h_layer(b, 0, idxs[i], L)
    verd_names = tuple(verd_names)

    def found(ctx, _T=plan.rounds, _blocks=blocks, _k=k):
        for t in range(1, _T + 1):
            for i in range(_blocks):
                if all(ctx.bindings[f"verd{t}b{i}g{g}"] == 1
                       for g in range(1, _k + 1)):
                    return 1
        return 0

    _broadcast_answer(b, k, rnd, found, verd_names)
    last = plan.rounds
    for i in range(blocks):
        b.local(0, "map", (idxs[i],), _xor_binding,
                reads=(f"cand{last}b{i}",), params=(f"cand{last}b{i}",))
        b.local(0, "single", (ys[i],), _gate_h)
        b.local(0, "single", (ys[i],), _gate_x)
        gads[i].release(b)
        b.release(idxs[i])
        b.release(ys[i])
    return b.build()


def build_disj_grover(n, k, eps=1 / 3):
    """One-sided disjointness: Grover search for a common coordinate with a
    randomized iteration schedule, one verification query per search round,
    and a final answer broadcast.  Never outputs 1 on disjoint inputs."""
    return _grover_disj(f"disj-grover-n{n}k{k}", n, k, eps, n)


def build_bounded_round_disj(n, k, M, eps=1 / 3):
    """Disjointness in O(M) rounds: the input splits into ceil(n/M^2) blocks
    of M^2 bits searched by independent Grover instances that share round
    labels (lockstep), with one OR-answer broadcast at the end."""
    if M < 2:
        raise ValueError("need M >= 2")
    if M * M > n:
        raise ValueError(f"M^2 = {M * M} exceeds n = {n}")
    return _grover_disj(f"disj-rounds-n{n}k{k}M{M}", n, k, eps, M * M)


# ---------------------------------------------------------------------------
# amplitude-amplification cost model (schedule only, never executed)

def build_aa_cost_model(n, k, c_aa=1.0):
    """The optimal-protocol cost shape: L = ceil(c_aa*sqrt(n)) charged
    rounds of 2k qubits (k to the coordinator, k back — one O_k or dispersal
    step each), then a k-qubit broadcast.  The walk unitaries themselves are
    free of communication, so this is exactly the whole ledger."""
    L = math.ceil(c_aa * math.sqrt(n))
    events = []
    for r in range(1, L + 1):
        for g in range(1, k + 1):
            events.append(TransmissionEvent(r, g, 0, f"q{g}", 1))
        for g in range(1, k + 1):
            events.append(TransmissionEvent(r, 0, g, f"q{g}", 1))
    for g in range(1, k + 1):
        events.append(TransmissionEvent(L + 1, 0, g, f"ans{g}", 1))
    return Schedule(Topology(k, True), events, f"aa-disj-n{n}k{k}",
                    meta={"n": n, "c_aa": c_aa})


def aa_cost(n, k, c_aa=1.0):
    return 2 * k * math.ceil(c_aa * math.sqrt(n)) + k


# ---------------------------------------------------------------------------
# symmetric predicates: exact zero-count subprotocol + phase-estimation
# counting over the query gadget

def iqpe_weight_estimate(bindings, p, npow):
    """Reconstruct the weight estimate from the ph1..php phase bits."""
    phi = sum(bindings[f"ph{l}"] * 2.0 ** -l for l in range(1, p + 1))
    return round(npow * math.sin(math.pi * phi) ** 2)


def build_symmetric(spec, eps=1 / 3):
    """Evaluate a symmetric predicate by splitting its table.

    Low-weight part (nonzero only at weights <= l0): iterative phase
    estimation on the Grover step built from the query gadget estimates the
    intersection weight; p = counting_phase_bits(n, l0) phase bits make the
    estimate exact with probability >= 1-eps whenever it matters.
    High-weight part (nonzero only at weights > n-l1): players report
    whether they have fewer than l1 zeros and, in a fixed-width payload,
    which zeros — the coordinator intersects exactly.  The final answer is
    the OR, negated when split_D normalized the table by negation.
    """
    n, k = spec.n, spec.k
    split = split_D(spec)   # raises on tables that straddle the midpoint
    a, bzeros = l0(spec.d), l1(spec.d)
    b = ProgramBuilder(Topology(k, True), f"symmetric-n{n}k{k}")
    for g in range(1, k + 1):
        b.declare_input(g, n)
    reads = []

    w1 = payload_width(n, bzeros) if bzeros > 0 else 0
    if bzeros > 0:
        for g in range(1, k + 1):
            regs = (f"flag{g}",) + ((f"zset{g}",) if w1 else ())
            b.alloc(f"flag{g}", g, 1)
            if w1:
                b.alloc(f"zset{g}", g, w1)
            b.local(g, "map", regs, _zero_report_write, params=(n, bzeros),
                    input_of=g)
            for r in regs:
                b.send(g, 0, r, 1)
        for g in range(1, k + 1):
            b.measure(0, f"flag{g}", f"flag{g}")
            if w1:
                b.measure(0, f"zset{g}", f"zset{g}")
            reads.append(f"flag{g}")
            if w1:
                reads.append(f"zset{g}")

    p = counting_phase_bits(n, a) if a > 0 else 0
    if a > 0:
        L = _log2ceil(n)
        npow = 1 << L
        b.alloc("ctrl", 0, 1)
        b.alloc("idx", 0, L)
        b.alloc("y", 0, 1)
        b.local(0, "single", ("y",), _gate_x)
        b.local(0, "single", ("y",), _gate_h)
        _h_layer(b, 0, "idx", L)
        gad = QueryGadget(n, k).attach(b, "idx", "y")
        rnd = 1
        for l in range(p, 0, -1):
            b.local(0, "single", ("ctrl",), _gate_h)
            for _ in range(1 << (l - 1)):
                rnd = gad.invoke(b, rnd, control="ctrl")
                _h_layer(b, 0, "idx", L)
                b.local(0, "phase", ("ctrl", "idx"), _controlled_diffusion_flip)
                _h_layer(b, 0, "idx", L)
            if l < p:
                fb = tuple((f"ph{t}", t - l + 1) for t in range(l + 1, p + 1))
                b.local(0, "single", ("ctrl",), _phase_feedback,
                        reads=tuple(name for name, _ in fb), params=fb)
            b.local(0, "single", ("ctrl",), _gate_h)
            b.measure(0, "ctrl", f"ph{l}")
            b.local(0, "map", ("ctrl",), _xor_binding,
                    reads=(f"ph{l}",), params=(f"ph{l}",))
        reads.extend(f"ph{l}" for l in range(1, p + 1))
        broadcast_round = rnd
    else:
        npow = 0
        broadcast_round = 2 if bzeros > 0 else 1

    def answer(ctx, _n=n, _k=k, _a=a, _b=bzeros, _w1=w1, _p=p, _npow=npow,
               _split=split):
        val = 0
        if _b > 0 and all(ctx.bindings[f"flag{g}"] for g in range(1, _k + 1)):
            union = set()
            for g in range(1, _k + 1):
                r = ctx.bindings[f"zset{g}"] if _w1 else 0
                union.update(unrank_small_subset(r, _n, _b))
            val = _split.d1[_n - len(union)]
        if not val and _a > 0:
            mhat = iqpe_weight_estimate(ctx.bindings, _p, _npow)
            if mhat <= _a:
                val = _split.d0[mhat]
        if _split.negated:
            val = 1 - val
        return val

    _broadcast_answer(b, k, broadcast_round, answer, tuple(reads))

    if a > 0:
        b.measure(0, "idx", "idxfin")
        b.local(0, "map", ("idx",), _xor_binding,
                reads=("idxfin",), params=("idxfin",))
        b.local(0, "single", ("y",), _gate_h)
        b.local(0, "single", ("y",), _gate_x)
        gad.release(b)
        for r in ("ctrl", "idx", "y"):
            b.release(r)
    if bzeros > 0:
        for g in range(1, k + 1):
            b.local(0, "map", (f"flag{g}",), _xor_binding,
                    reads=(f"flag{g}",), params=(f"flag{g}",))
            b.release(f"flag{g}")
            if w1:
                b.local(0, "map", (f"zset{g}",), _xor_binding,
                        reads=(f"zset{g}",), params=(f"zset{g}",))
                b.release(f"zset{g}")
    return b.build()
