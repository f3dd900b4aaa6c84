"""Dense state-vector simulation with named, party-owned registers.

Conventions used everywhere in this package:

* A register is an ordered tuple of qubits; qubit 0 of a register is the least
  significant bit of the register's basis label.
* When an operation acts on a *register set* (an ordered sequence of registers),
  the first register occupies the least significant bits of the combined label,
  the second the bits above it, and so on.
* The machine state is a pool of dense complex128 factors.  Registers that have
  never interacted live in separate factors; any operation spanning factors
  merges them first.  Measurement collapse and ancilla release split factors
  back apart.  No factor may exceed the qubit cap (default 26).
* Basis labels inside a factor are little-endian in the factor's qubit
  positions: amplitude index i has qubit p in state (i >> p) & 1.
"""

from __future__ import annotations

import numpy as np

DEFAULT_QUBIT_CAP = 26
RELEASE_TOL = 1e-9
GATE_TOL = 1e-9


class SimulationError(Exception):
    """Base class for state machine errors."""


class QubitCapError(SimulationError):
    """An allocation or merge would exceed the configured qubit cap."""


class DirtyAncillaError(SimulationError):
    """Release requested for a register not in |0...0> on every branch."""


class NonUnitaryGateError(SimulationError):
    """Gate or operator matrix is not unitary within tolerance."""


class IrreversibleMapError(SimulationError):
    """A classical map on basis labels is not a bijection."""


class RegisterError(SimulationError):
    """Unknown register, bad width/offset, or double allocation."""


class StateUnderflowError(SimulationError):
    """Measured register carries no probability mass; state is corrupted."""


# ---------------------------------------------------------------------------
# gates

ID2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)


def rz(theta: float) -> np.ndarray:
    """Phase rotation diag(1, e^{i*theta})."""
    return np.array([[1, 0], [0, np.exp(1j * theta)]], dtype=np.complex128)


def check_unitary(u: np.ndarray, tol: float = GATE_TOL) -> None:
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NonUnitaryGateError(f"operator must be square, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise NonUnitaryGateError(f"operator deviates from unitarity by {dev:.3e}")


# ---------------------------------------------------------------------------
# registers

class Register:
    """A named, contiguous group of qubits owned by one party."""

    __slots__ = ("name", "owner", "qubits")

    def __init__(self, name: str, owner: int, qubits: tuple[int, ...]):
        self.name = name
        self.owner = owner
        self.qubits = qubits

    @property
    def width(self) -> int:
        return len(self.qubits)

    def __repr__(self):
        return f"Register({self.name!r}, owner={self.owner}, width={self.width})"


class RegisterMap:
    """Name -> Register table plus the free list of recycled qubit ids."""

    def __init__(self):
        self._regs: dict[str, Register] = {}
        self._free: list[int] = []
        self._next_id = 0

    def __contains__(self, name: str) -> bool:
        return name in self._regs

    def __getitem__(self, name: str) -> Register:
        try:
            return self._regs[name]
        except KeyError:
            raise RegisterError(f"unknown register {name!r}") from None

    def names(self):
        return list(self._regs)

    def take_ids(self, width: int) -> tuple[int, ...]:
        ids = []
        while self._free and len(ids) < width:
            ids.append(self._free.pop())
        while len(ids) < width:
            ids.append(self._next_id)
            self._next_id += 1
        return tuple(ids)

    def add(self, name: str, owner: int, qubits: tuple[int, ...]) -> Register:
        if name in self._regs:
            raise RegisterError(f"register {name!r} already allocated")
        reg = Register(name, owner, qubits)
        self._regs[name] = reg
        return reg

    def drop(self, name: str) -> Register:
        reg = self[name]
        del self._regs[name]
        self._free.extend(reg.qubits)
        return reg


# ---------------------------------------------------------------------------
# dense factor

class StateVector:
    """One dense factor of the global state: amplitudes over an ordered qubit tuple."""

    __slots__ = ("qubits", "amps")

    def __init__(self, qubits: tuple[int, ...], amps: np.ndarray):
        self.qubits = tuple(qubits)
        self.amps = amps

    @property
    def width(self) -> int:
        return len(self.qubits)

    @classmethod
    def zeros(cls, qubits: tuple[int, ...]) -> "StateVector":
        amps = np.zeros(1 << len(qubits), dtype=np.complex128)
        amps[0] = 1.0
        return cls(qubits, amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def position(self, qubit_id: int) -> int:
        return self.qubits.index(qubit_id)


def _tensor(a: StateVector, b: StateVector) -> StateVector:
    """Merged factor; a's qubits occupy the low positions."""
    amps = (b.amps[:, None] * a.amps[None, :]).ravel()
    return StateVector(a.qubits + b.qubits, amps)


def _front_transpose(amps: np.ndarray, width: int, positions: list[int]):
    """Reshape so rows are labels of `positions` (LSB-first), columns the rest.

    Returns (matrix of shape (2^w, 2^(width-w)), rest_positions sorted ascending).
    """
    w = len(positions)
    front_axes = [width - 1 - p for p in reversed(positions)]
    rest_axes = [a for a in range(width) if a not in set(front_axes)]
    arr = amps.reshape((2,) * width).transpose(front_axes + rest_axes)
    rest_positions = sorted(width - 1 - a for a in rest_axes)
    return arr.reshape(1 << w, -1), rest_positions, front_axes + rest_axes


def _sub_labels(width: int, positions: list[int]) -> np.ndarray:
    """For every factor label, the packed label of the given positions (LSB-first)."""
    lab = np.arange(1 << width, dtype=np.int64)
    sub = np.zeros_like(lab)
    for j, p in enumerate(positions):
        sub |= ((lab >> p) & 1) << j
    return sub


def _full_perm(width: int, positions: list[int], table: np.ndarray) -> np.ndarray:
    """Lift a permutation of the sub-label space to the factor's label space."""
    lab = np.arange(1 << width, dtype=np.int64)
    sub = _sub_labels(width, positions)
    mapped = table[sub]
    keep = ~np.int64(sum(1 << p for p in positions))
    out = lab & keep
    for j, p in enumerate(positions):
        out |= ((mapped >> np.int64(j)) & 1) << np.int64(p)
    return out


# ---------------------------------------------------------------------------
# machine

class SimState:
    """Pool of dense factors plus the register table.

    All public operations address registers by name.  `rng` is supplied by the
    caller for measurements so that one seeded generator drives a whole
    execution in instruction order.
    """

    def __init__(self, cap: int = DEFAULT_QUBIT_CAP):
        self.cap = int(cap)
        self.registers = RegisterMap()
        self._factor_of: dict[int, StateVector] = {}
        self._perm_cache: dict = {}
        self._mask_cache: dict = {}
        self._chain_cache: dict = {}

    # -- allocation ---------------------------------------------------------

    def alloc(self, name: str, owner: int, width: int) -> Register:
        if width <= 0:
            raise RegisterError(f"register {name!r} needs positive width")
        if width > self.cap:
            raise QubitCapError(
                f"allocating {name!r} needs {width} qubits; cap is {self.cap}")
        reg = self.registers.add(name, owner, self.registers.take_ids(width))
        factor = StateVector.zeros(reg.qubits)
        for q in reg.qubits:
            self._factor_of[q] = factor
        return reg

    def release(self, name: str, tol: float = RELEASE_TOL) -> None:
        """Free a register; it must be exactly |0...0> (disentangled) on every branch."""
        reg = self.registers[name]
        factor = self._factor_of[reg.qubits[0]]
        positions = [factor.position(q) for q in reg.qubits]
        mat, rest_positions, _ = _front_transpose(factor.amps, factor.width, positions)
        stray = float(np.max(np.abs(mat[1:]))) if mat.shape[0] > 1 else 0.0
        if stray > tol:
            raise DirtyAncillaError(
                f"register {name!r} is not clear: residual amplitude {stray:.3e}")
        self._replace_factor(factor, rest_positions, mat[0].copy())
        self.registers.drop(name)

    def _replace_factor(self, old: StateVector, rest_positions: list[int],
                        rest_amps: np.ndarray) -> None:
        for q in old.qubits:
            self._factor_of.pop(q, None)
        if rest_positions:
            new = StateVector(tuple(old.qubits[p] for p in rest_positions), rest_amps)
            for q in new.qubits:
                self._factor_of[q] = new

    # -- factor plumbing ----------------------------------------------------

    def factor(self, name: str) -> StateVector:
        reg = self.registers[name]
        return self._factor_of[reg.qubits[0]]

    def _merged_factor(self, names) -> StateVector:
        factors = []
        for name in names:
            f = self.factor(name)
            if not any(f is g for g in factors):
                factors.append(f)
        merged = factors[0]
        for f in factors[1:]:
            need = merged.width + f.width
            if need > self.cap:
                raise QubitCapError(
                    f"operation needs a {need}-qubit factor; cap is {self.cap}")
            merged = _tensor(merged, f)
        if len(factors) > 1:
            for q in merged.qubits:
                self._factor_of[q] = merged
        return merged

    def _positions(self, factor: StateVector, names) -> list[int]:
        pos = []
        for name in names:
            for q in self.registers[name].qubits:
                pos.append(factor.position(q))
        return pos

    # -- operations ---------------------------------------------------------

    def apply_single(self, gate: np.ndarray, name: str, offset: int = 0) -> None:
        """Apply a 2x2 unitary to qubit `offset` of register `name`."""
        gate = np.asarray(gate, dtype=np.complex128)
        check_unitary(gate)
        reg = self.registers[name]
        if not 0 <= offset < reg.width:
            raise RegisterError(f"offset {offset} out of range for {name!r}")
        factor = self.factor(name)
        p = factor.position(reg.qubits[offset])
        a = factor.amps.reshape(-1, 2, 1 << p)
        out = np.empty_like(a)
        out[:, 0, :] = gate[0, 0] * a[:, 0, :] + gate[0, 1] * a[:, 1, :]
        out[:, 1, :] = gate[1, 0] * a[:, 0, :] + gate[1, 1] * a[:, 1, :]
        factor.amps = out.reshape(-1)

    def _resolve_table(self, names, table_or_fn) -> np.ndarray:
        w = sum(self.registers[n].width for n in names)
        size = 1 << w
        if callable(table_or_fn):
            table = np.fromiter(
                (table_or_fn(l) for l in range(size)), dtype=np.int64, count=size)
        else:
            table = np.asarray(table_or_fn, dtype=np.int64)
        if table.shape != (size,):
            raise IrreversibleMapError(
                f"map table has shape {table.shape}, expected ({size},)")
        if table.min() < 0 or table.max() >= size:
            raise IrreversibleMapError("map table values out of label range")
        if np.any(np.bincount(table, minlength=size) != 1):
            raise IrreversibleMapError("classical map is not a bijection")
        return table

    def apply_classical_map(self, names, table_or_fn, key=None) -> None:
        """Apply a reversible basis-label map to a register set.

        `table_or_fn` is either a label->label callable or a full table of
        length 2^w over the combined label space (first register = low bits).
        """
        table = self._resolve_table(names, table_or_fn)
        factor = self._merged_factor(names)
        positions = self._positions(factor, names)
        fp = self._perm_full_cached(key, factor, positions, table)
        out = np.empty_like(factor.amps)
        out[fp] = factor.amps
        factor.amps = out

    def _perm_full_cached(self, key, factor: StateVector, positions, table) -> np.ndarray:
        if key is None:
            return _full_perm(factor.width, positions, table)
        ck = (key, factor.width, tuple(positions))
        fp = self._perm_cache.get(ck)
        if fp is None:
            fp = _full_perm(factor.width, positions, table)
            self._perm_cache[ck] = fp
        return fp

    def apply_map_chain(self, ops, chain_key=None) -> None:
        """Apply a sequence of classical maps as one composed permutation.

        `ops` is a list of (names, table, key) triples.  Used by the executor
        to fuse the long permutation runs that protocols generate; repeated
        chains hit a composed-permutation cache.  Ops touching disjoint
        register sets commute, so the chain is split into connected
        components first — fusing must never be the thing that entangles
        otherwise independent registers.
        """
        if not ops:
            return
        if len(ops) > 1:
            parent: dict = {}

            def find(a):
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for names, _, _ in ops:
                for n in names:
                    parent.setdefault(n, n)
                root = find(names[0])
                for n in names[1:]:
                    parent[find(n)] = root
            components: dict = {}
            for op in ops:
                components.setdefault(find(op[0][0]), []).append(op)
            if len(components) > 1:
                for group in components.values():
                    self.apply_map_chain(group)
                return
        all_names = []
        for names, _, _ in ops:
            for n in names:
                if n not in all_names:
                    all_names.append(n)
        factor = self._merged_factor(all_names)
        ck = None
        if all(op[2] is not None for op in ops):
            ck = (tuple(op[2] for op in ops), factor.width,
                  tuple(tuple(self._positions(factor, op[0])) for op in ops))
            fp = self._chain_cache.get(ck)
            if fp is not None:
                out = np.empty_like(factor.amps)
                out[fp] = factor.amps
                factor.amps = out
                return
        fp = None
        for names, table, key in ops:
            table = self._resolve_table(names, table)
            positions = self._positions(factor, names)
            op_fp = self._perm_full_cached(key, factor, positions, table)
            fp = op_fp if fp is None else op_fp[fp]
        if ck is not None:
            self._chain_cache[ck] = fp
        out = np.empty_like(factor.amps)
        out[fp] = factor.amps
        factor.amps = out

    def apply_phase_predicate(self, names, mask_or_pred, key=None) -> None:
        """Multiply amplitudes by -1 where the predicate holds on the label."""
        w = sum(self.registers[n].width for n in names)
        size = 1 << w
        if callable(mask_or_pred):
            mask = np.fromiter(
                (bool(mask_or_pred(l)) for l in range(size)), dtype=bool, count=size)
        else:
            mask = np.asarray(mask_or_pred, dtype=bool)
            if mask.shape != (size,):
                raise RegisterError(
                    f"phase mask has shape {mask.shape}, expected ({size},)")
        factor = self._merged_factor(names)
        positions = self._positions(factor, names)
        signs = self._signs_full_cached(key, factor, positions, mask)
        factor.amps *= signs

    def _signs_full_cached(self, key, factor, positions, mask) -> np.ndarray:
        ck = None
        if key is not None:
            ck = (key, factor.width, tuple(positions))
            cached = self._mask_cache.get(ck)
            if cached is not None:
                return cached
        signs_sub = np.where(mask, -1.0, 1.0)
        signs = signs_sub[_sub_labels(factor.width, positions)]
        if ck is not None:
            self._mask_cache[ck] = signs
        return signs

    def apply_unitary(self, names, u: np.ndarray, key=None) -> None:
        """Apply a small dense unitary over a register set (low-bit-first labels)."""
        u = np.asarray(u, dtype=np.complex128)
        check_unitary(u, tol=GATE_TOL)
        w = sum(self.registers[n].width for n in names)
        if u.shape != (1 << w, 1 << w):
            raise RegisterError(
                f"unitary has shape {u.shape}, expected {(1 << w, 1 << w)}")
        factor = self._merged_factor(names)
        positions = self._positions(factor, names)
        if positions == list(range(positions[0], positions[0] + w)):
            # register bits sit contiguously in the factor: one batched matmul
            a = factor.amps.reshape(-1, 1 << w, 1 << positions[0])
            factor.amps = np.matmul(u, a).reshape(-1)
            return
        mat, _, perm = _front_transpose(factor.amps, factor.width, positions)
        out = (u @ mat).reshape((2,) * factor.width)
        inv = np.argsort(perm)
        factor.amps = np.ascontiguousarray(out.transpose(inv)).ravel()

    # -- measurement --------------------------------------------------------

    def peek_probs(self, name: str) -> np.ndarray:
        """Outcome distribution of a register without collapsing."""
        factor = self.factor(name)
        positions = self._positions(factor, [name])
        mat, _, _ = _front_transpose(factor.amps, factor.width, positions)
        return np.sum(np.abs(mat) ** 2, axis=1)

    def measure(self, name: str, rng: np.random.Generator) -> int:
        """Computational-basis measurement of a whole register.

        Collapses the state; the measured register is split off as its own
        basis factor so later work on the rest stays small.
        """
        reg = self.registers[name]
        factor = self.factor(name)
        positions = self._positions(factor, [name])
        mat, rest_positions, _ = _front_transpose(factor.amps, factor.width, positions)
        probs = np.sum(np.abs(mat) ** 2, axis=1)
        total = float(probs.sum())
        if total < 1e-12:
            raise StateUnderflowError(
                f"register {name!r} holds no probability mass (norm {total:.3e})")
        probs = probs / total
        u = rng.random()
        outcome = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        outcome = min(outcome, len(probs) - 1)
        rest = mat[outcome] / np.sqrt(probs[outcome])
        self._replace_factor(factor, rest_positions, rest.copy())
        basis = np.zeros(1 << reg.width, dtype=np.complex128)
        basis[outcome] = 1.0
        measured = StateVector(reg.qubits, basis)
        for q in reg.qubits:
            self._factor_of[q] = measured
        return outcome

    # -- inspection (tests, debugging) --------------------------------------

    def register_state(self, names) -> np.ndarray:
        """Joint amplitudes of the given registers, which must span whole factors.

        Label order: first register = least significant bits.
        """
        factor = self._merged_factor(names)
        positions = self._positions(factor, names)
        if len(positions) != factor.width:
            raise RegisterError(
                "register_state needs the registers to cover their factor "
                f"(got {len(positions)} of {factor.width} qubits)")
        mat, _, _ = _front_transpose(factor.amps, factor.width, positions)
        return mat[:, 0].copy()

    def global_state(self, names) -> np.ndarray:
        """Joint amplitudes of all listed registers (merges everything listed)."""
        return self.register_state(names)

    def total_norm_dev(self) -> float:
        """Largest |norm - 1| over live factors."""
        seen, dev = [], 0.0
        for f in self._factor_of.values():
            if not any(f is g for g in seen):
                seen.append(f)
                dev = max(dev, abs(f.norm() - 1.0))
        return dev
