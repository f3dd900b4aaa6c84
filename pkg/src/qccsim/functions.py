"""Predicate families and the weight-table machinery for symmetric functions.

Inputs are k bit strings of length n; character i of a string is coordinate i.
A symmetric predicate is given by a table D of n+1 bits and evaluates to
D[|x_1 ∩ ... ∩ x_k|], where the intersection weight counts coordinates that
are 1 in every input.  Disjointness (is the common intersection nonempty),
inner product (its parity) and threshold predicates are all of this shape;
equality is the one shipped family that is not.

The flip-point quantities l0/l1 and the scale G drive the protocol builders:
l0 bounds the weights the counting subprotocol must resolve exactly, l1
bounds the zero sets the exact subprotocol must transmit.  split_D cuts a
table into those two halves after normalizing it to be zero on the middle
interval (negating if necessary and saying so).
"""

import math
from dataclasses import dataclass


class SplitError(ValueError):
    """The table is not constant on [l0, n-l1], so it cannot be split."""


def _check_inputs(inputs, n=None):
    if not inputs:
        raise ValueError("need at least one input string")
    if n is None:
        n = len(inputs[0])
    for x in inputs:
        if len(x) != n:
            raise ValueError(
                f"input length mismatch: expected {n}, got {len(x)}")
        if any(ch not in "01" for ch in x):
            raise ValueError(f"input is not a bit string: {x!r}")
    return n


def intersection_weight(inputs):
    """Number of coordinates equal to 1 in every input string."""
    n = _check_inputs(inputs)
    return sum(1 for i in range(n) if all(x[i] == "1" for x in inputs))


def eval_disj(inputs):
    """1 iff some coordinate is 1 in all inputs (intersection nonempty)."""
    return 1 if intersection_weight(inputs) > 0 else 0


def eval_ip(inputs):
    """Parity of the intersection weight."""
    return intersection_weight(inputs) & 1


def eval_equality(inputs):
    _check_inputs(inputs)
    return 1 if all(x == inputs[0] for x in inputs) else 0


@dataclass(frozen=True)
class SymmetricSpec:
    """A symmetric predicate: n bits per party, k parties, table d of n+1 bits.

    Text file format: line 1 is "n k", line 2 the (n+1)-character bit table.
    """

    n: int
    k: int
    d: tuple

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be positive")
        d = tuple(int(v) for v in self.d)
        if len(d) != self.n + 1:
            raise ValueError(
                f"table has {len(d)} entries, expected n+1 = {self.n + 1}")
        if any(v not in (0, 1) for v in d):
            raise ValueError("table entries must be bits")
        object.__setattr__(self, "d", d)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            tokens = fh.read().split()
        if len(tokens) != 3:
            raise ValueError(
                f"{path}: expected 'n k' then the bit table, got {tokens!r}")
        n, k = int(tokens[0]), int(tokens[1])
        return cls(n, k, tuple(int(ch) for ch in tokens[2]))

    def to_file(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.n} {self.k}\n")
            fh.write("".join(str(v) for v in self.d) + "\n")


def disj_spec(n, k):
    return SymmetricSpec(n, k, (0,) + (1,) * n)


def ip_spec(n, k):
    return SymmetricSpec(n, k, tuple(m & 1 for m in range(n + 1)))


def eval_symmetric(spec, inputs):
    """Table lookup at the intersection weight."""
    if len(inputs) != spec.k:
        raise ValueError(f"expected {spec.k} inputs, got {len(inputs)}")
    _check_inputs(inputs, spec.n)
    return spec.d[intersection_weight(inputs)]


def _table(spec):
    if isinstance(spec, SymmetricSpec):
        return spec.d
    return tuple(int(v) for v in spec)


def l0(spec):
    """Largest l in [1, n/2] where the table flips, 0 if it never does."""
    d = _table(spec)
    n = len(d) - 1
    for l in range(n // 2, 0, -1):
        if d[l] != d[l - 1]:
            return l
    return 0


def l1(spec):
    """Largest n-l over l in [n/2, n) where the table flips, 0 if none."""
    d = _table(spec)
    n = len(d) - 1
    for l in range((n + 1) // 2, n):
        if d[l] != d[l + 1]:
            return n - l
    return 0


def G(spec):
    """sqrt(n*l0) + l1, the complexity scale of a symmetric predicate."""
    d = _table(spec)
    n = len(d) - 1
    return math.sqrt(n * l0(d)) + l1(d)


@dataclass(frozen=True)
class SplitD:
    """Low/high split of a weight table.

    d0 keeps entries at weights <= l0, d1 keeps entries at weights > n-l1,
    both taken from the *normalized* table (negated when the original is
    constant-1 on the middle interval, in which case negated is True and
    d0 | d1 reconstructs the negation of the original).
    """

    d0: tuple
    d1: tuple
    negated: bool


def split_D(spec):
    """Split a table into its low- and high-weight parts.

    The table must be constant on [l0, n-l1]; constant-1 tables are negated
    first and the flag records that, so consumers flip their final answer.
    A non-constant middle means the flips straddle the midpoint (possible
    only for odd n) and the table cannot be normalized: that raises.
    """
    d = _table(spec)
    n = len(d) - 1
    a, b = l0(d), l1(d)
    mid = d[a:n - b + 1]
    if all(v == 0 for v in mid):
        work, negated = d, False
    elif all(v == 1 for v in mid):
        work, negated = tuple(1 - v for v in d), True
    else:
        raise SplitError(
            f"table is not constant on [{a}, {n - b}]: {d}")
    d0 = tuple(work[m] if m <= a else 0 for m in range(n + 1))
    d1 = tuple(work[m] if m > n - b else 0 for m in range(n + 1))
    return SplitD(d0, d1, negated)


# --- k-party embeddings -------------------------------------------------

_PAD_FAMILIES = ("disj", "ip", "symmetric")


@dataclass(frozen=True)
class EmbeddingMap:
    """Maps one party's string to the other k-1 parties' strings.

    For intersection-type families the first slot carries the string and the
    rest are all-ones (which never change an intersection); for equality
    every slot is a copy.  Position i is where the *other* two-party input
    will be planted, see place().
    """

    family: str
    i: int
    k: int

    def __call__(self, x):
        if self.family == "equality":
            return (x,) * (self.k - 1)
        return (x,) + ("1" * len(x),) * (self.k - 2)


def embedding(family, i, k):
    if family not in _PAD_FAMILIES + ("equality",):
        raise ValueError(f"unknown family {family!r}")
    if not 1 <= i <= k or k < 2:
        raise ValueError(f"position {i} out of range for k={k}")
    return EmbeddingMap(family, i, k)


def place(y, i, x):
    """Insert x at position i (1-based) into the k-1 strings y."""
    y = tuple(y)
    if not 1 <= i <= len(y) + 1:
        raise ValueError(f"position {i} out of range")
    return y[:i - 1] + (x,) + y[i - 1:]


def embed_inputs(family, i, k, x1, x2):
    """The k-party input planting (x1, x2) at position i."""
    return place(embedding(family, i, k)(x2), i, x1)


# --- zero-set encoding for the exact high-weight subprotocol ------------
#
# A player whose string has fewer than `bound` zeros can name its zero set
# with an integer: subsets of {0..n-1} of size < bound are ordered by size,
# then within a size by the combinatorial number system.

def count_small_subsets(n, bound):
    return sum(math.comb(n, s) for s in range(bound))


def payload_width(n, bound):
    """Bits needed to index a subset of size < bound (0 when only {} fits)."""
    return (count_small_subsets(n, bound) - 1).bit_length()


def zero_positions(x):
    return tuple(i for i, ch in enumerate(x) if ch == "0")


def rank_small_subset(positions, n):
    positions = tuple(sorted(positions))
    r = count_small_subsets(n, len(positions))
    for j, c in enumerate(positions):
        r += math.comb(c, j + 1)
    return r


def unrank_small_subset(r, n, bound):
    s, cum = 0, 0
    while s < bound and cum + math.comb(n, s) <= r:
        cum += math.comb(n, s)
        s += 1
    if s >= bound:
        raise ValueError(f"rank {r} out of range for bound {bound}")
    r -= cum
    positions = []
    for j in range(s, 0, -1):
        c = j - 1
        while math.comb(c + 1, j) <= r:
            c += 1
        r -= math.comb(c, j)
        positions.append(c)
    return tuple(sorted(positions))
