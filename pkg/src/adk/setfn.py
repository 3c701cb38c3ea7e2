"""Exact calculus of set functions on small ground sets.

A set function is a table of Fractions indexed by subset bitmask: bit ``i``
of a mask stands for element ``i`` of the ground set.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

MAX_GROUND = 20
MAX_PARTITION = 6
INF = math.inf

Number = Union[int, Fraction, str]


def to_fraction(value) -> Fraction:
    """Exact conversion; floats are refused so sign tests stay exact."""
    if isinstance(value, bool):
        raise TypeError("booleans are not set-function values")
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def submasks(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` in increasing numeric order."""
    sub = 0
    while True:
        yield sub
        if sub == mask:
            return
        sub = (sub - mask) & mask


def masks_of_size(n: int, size: int) -> list[int]:
    out = [sum(1 << i for i in combo) for combo in itertools.combinations(range(n), size)]
    out.sort()
    return out


def bits(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def resolve_k(k, n: int) -> int:
    """Effective difference order: ``inf`` (or anything >= n) means n."""
    if k is None or k == INF:
        return n
    if isinstance(k, str):
        if k.lower() in ("inf", "infinity", "∞"):
            return n
        k = int(k)
    k = int(k)
    if k < 1:
        raise ValueError(f"AD-k order must be >= 1, got {k}")
    return min(k, n)


@dataclass(frozen=True)
class GroundSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"ground labels must be distinct: {labels}")
        if len(labels) > MAX_GROUND:
            raise ValueError(f"ground set too large ({len(labels)} > {MAX_GROUND})")

    @classmethod
    def of_size(cls, n: int) -> GroundSet:
        return cls(tuple(str(i) for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def full(self) -> int:
        return (1 << len(self.labels)) - 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown element {label!r}") from None

    def mask(self, labels: Iterable[str]) -> int:
        m = 0
        for label in labels:
            m |= 1 << self.index(label)
        return m

    def labels_of(self, mask: int) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in bits(mask))


@dataclass(frozen=True)
class SetFunction:
    """Exact table ``values[mask]`` of a function on all subsets of ``ground``."""

    ground: GroundSet
    values: tuple[Fraction, ...]

    def __post_init__(self):
        if not isinstance(self.ground, GroundSet):
            object.__setattr__(self, "ground", GroundSet(tuple(self.ground)))
        vals = tuple(to_fraction(v) for v in self.values)
        if len(vals) != 1 << self.ground.size:
            raise ValueError(
                f"table length {len(vals)} != 2^{self.ground.size}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, ground: GroundSet, fn: Callable[[int], Number]) -> SetFunction:
        return cls(ground, tuple(fn(m) for m in range(1 << ground.size)))

    @classmethod
    def from_mapping(cls, ground: GroundSet, table: Mapping[Iterable[str], Number],
                     default: Number | None = None) -> SetFunction:
        vals: list = [default] * (1 << ground.size)
        for key, value in table.items():
            vals[ground.mask(key)] = value
        if any(v is None for v in vals):
            missing = [ground.labels_of(m) for m, v in enumerate(vals) if v is None]
            raise ValueError(f"missing table entries: {missing}")
        return cls(ground, tuple(vals))

    @property
    def n(self) -> int:
        return self.ground.size

    def __call__(self, mask: int) -> Fraction:
        return self.values[mask]

    def __add__(self, other: SetFunction) -> SetFunction:
        if other.ground != self.ground:
            raise ValueError("ground sets differ")
        return SetFunction(self.ground, tuple(a + b for a, b in zip(self.values, other.values)))

    def scale(self, w: Number) -> SetFunction:
        w = to_fraction(w)
        return SetFunction(self.ground, tuple(w * v for v in self.values))

    def integer_table(self) -> tuple[list[int], int]:
        """Values over a common denominator: ``values[m] == table[m] / den``."""
        den = 1
        for v in self.values:
            den = den * v.denominator // math.gcd(den, v.denominator)
        return [v.numerator * (den // v.denominator) for v in self.values], den

    def is_monotone(self) -> bool:
        for m in range(1 << self.n):
            for i in range(self.n):
                if not m >> i & 1 and self.values[m] > self.values[m | 1 << i]:
                    return False
        return True

    def as_mapping(self) -> dict[tuple[str, ...], Fraction]:
        return {self.ground.labels_of(m): v for m, v in enumerate(self.values)}


@dataclass(frozen=True)
class ADkReport:
    holds: bool
    checked_k: int
    witness: tuple[int, int, Fraction] | None = None  # (S, A, Δ_A f(S))

    def __post_init__(self):
        if self.holds != (self.witness is None):
            raise ValueError("holds must be True exactly when no witness is given")


@dataclass(frozen=True)
class Partition:
    blocks: tuple[int, ...]

    def __post_init__(self):
        seen = 0
        for b in self.blocks:
            if b == 0:
                raise ValueError("empty block")
            if seen & b:
                raise ValueError("blocks overlap")
            seen |= b

    @property
    def universe(self) -> int:
        out = 0
        for b in self.blocks:
            out |= b
        return out


def difference(f: SetFunction, A: int, S: int) -> Fraction:
    """Alternating sum over B ⊆ A of (-1)^|B| f(S ∪ (A \\ B))."""
    total = Fraction(0)
    for B in submasks(A):
        term = f.values[S | (A & ~B)]
        total += -term if B.bit_count() & 1 else term
    return total


def iterated_difference(f: SetFunction, order: Sequence[int], S: int) -> Fraction:
    """Apply single-element differences one element at a time, in ``order``."""
    if not order:
        return f.values[S]
    x, rest = order[-1], order[:-1]
    return iterated_difference(f, rest, S | 1 << x) - iterated_difference(f, rest, S)


def is_adk(f: SetFunction, k) -> ADkReport:
    """Check (-1)^(|A|+1) Δ_A f(S) >= 0 for all disjoint S, A with 1 <= |A| <= k.

    The first violation in (|A|, A, S) order is returned as the witness.
    """
    n = f.n
    kk = resolve_k(k, n)
    table, den = f.integer_table()
    full = (1 << n) - 1
    prev: dict[int, list[int]] = {0: table}
    for size in range(1, kk + 1):
        cur: dict[int, list[int]] = {}
        sign = 1 if size % 2 else -1
        for A in masks_of_size(n, size):
            low = A & -A
            base = prev[A ^ low]
            d = [0] * (1 << n)
            for S in submasks(full & ~A):
                val = base[S | low] - base[S]
                d[S] = val
                if sign * val < 0:
                    return ADkReport(False, kk, (S, A, Fraction(val, den)))
            cur[A] = d
        prev = cur
    return ADkReport(True, kk, None)


def mobius(h: SetFunction) -> SetFunction:
    """g(S) = Σ_{T ⊆ S} (-1)^{|S|-|T|} h(T)."""
    t = list(h.values)
    for i in range(h.n):
        bit = 1 << i
        for m in range(1 << h.n):
            if m & bit:
                t[m] -= t[m ^ bit]
    return SetFunction(h.ground, tuple(t))


def mobius_inverse(g: SetFunction) -> SetFunction:
    """h(S) = Σ_{T ⊆ S} g(T)."""
    t = list(g.values)
    for i in range(g.n):
        bit = 1 << i
        for m in range(1 << g.n):
            if m & bit:
                t[m] += t[m ^ bit]
    return SetFunction(g.ground, tuple(t))


def _check_point(n: int, x: Sequence) -> list[Fraction]:
    pt = [to_fraction(c) for c in x]
    if len(pt) != n:
        raise ValueError(f"point has {len(pt)} coordinates, ground has {n}")
    for c in pt:
        if not 0 <= c <= 1:
            raise ValueError(f"coordinate {c} outside [0, 1]")
    return pt


def _fold(values: Sequence[Fraction], n: int, x: Sequence[Fraction], diff_mask: int = 0) -> Fraction:
    # Collapse one coordinate at a time, highest bit first: interpolate along
    # coordinates outside diff_mask, take the difference along those inside.
    t = list(values)
    for i in reversed(range(n)):
        half = 1 << i
        lo, hi = t[:half], t[half:]
        if diff_mask >> i & 1:
            t = [b - a for a, b in zip(lo, hi)]
        else:
            xi = x[i]
            t = [a + xi * (b - a) for a, b in zip(lo, hi)]
    return t[0]


def multilinear_eval(f: SetFunction, x: Sequence) -> Fraction:
    """Multilinear extension Σ_T Π_{v∈T} x_v Π_{v∉T} (1 - x_v) f(T)."""
    return _fold(f.values, f.n, _check_point(f.n, x))


def multilinear_partial(f: SetFunction, A: int, x: Sequence) -> Fraction:
    """Mixed partial of the multilinear extension along the coordinates in A.

    Equals Σ_{T ⊆ V\\A} Δ_A f(T) Π_{v∈T} x_v Π_{v∈V\\(A∪T)} (1 - x_v); the
    coordinates in A do not enter.
    """
    if A == 0:
        raise ValueError("A must be nonempty")
    if A >> f.n:
        raise ValueError("A is not a subset of the ground set")
    return _fold(f.values, f.n, _check_point(f.n, x), A)


def _coerce_inner(f: SetFunction, g) -> list[SetFunction]:
    if isinstance(g, Mapping):
        try:
            inner = [g[label] for label in f.ground.labels]
        except KeyError as exc:
            raise ValueError(f"no inner function for element {exc.args[0]!r}") from None
    else:
        inner = list(g)
    if len(inner) != f.n:
        raise ValueError(f"need {f.n} inner functions, got {len(inner)}")
    return inner


def _check_unit(name: str, fn: SetFunction) -> None:
    for m, v in enumerate(fn.values):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} takes value {v} outside [0, 1] at {fn.ground.labels_of(m)}")


def _compound_inputs(f: SetFunction, g) -> tuple[list[SetFunction], GroundSet]:
    inner = _coerce_inner(f, g)
    _check_unit("f", f)
    if not inner:
        raise ValueError("compound needs a nonempty outer ground set")
    ground = inner[0].ground
    for label, gv in zip(f.ground.labels, inner):
        if gv.ground != ground:
            raise ValueError("inner functions must share one ground set")
        _check_unit(f"g[{label}]", gv)
    return inner, ground


def compound(f: SetFunction, g) -> SetFunction:
    """h(S) = Σ_{T ⊆ V} Π_{v∈T} g_v(S) Π_{v∉T} (1 - g_v(S)) f(T).

    ``g`` maps each element of f's ground set to a function on a common set U
    (a mapping keyed by label, or a sequence in ground order).
    """
    inner, ground = _compound_inputs(f, g)
    return SetFunction(ground, tuple(
        _fold(f.values, f.n, [gv.values[S] for gv in inner]) for S in range(1 << ground.size)
    ))


def compound_eval_continuous(f: SetFunction, g, x: Sequence) -> Fraction:
    """H(x) with every inner function replaced by its multilinear extension."""
    inner, ground = _compound_inputs(f, g)
    pt = _check_point(ground.size, x)
    return _fold(f.values, f.n, [_fold(gv.values, gv.n, pt) for gv in inner])


def enumerate_partitions(ell: int) -> list[Partition]:
    """All set partitions of {0, ..., ell-1}, blocks as bitmasks."""
    if not 1 <= ell <= MAX_PARTITION:
        raise ValueError(f"partition size must be in 1..{MAX_PARTITION}, got {ell}")
    out: list[Partition] = []

    def grow(i: int, blocks: list[int]) -> None:
        if i == ell:
            out.append(Partition(tuple(blocks)))
            return
        for j in range(len(blocks)):
            blocks[j] |= 1 << i
            grow(i + 1, blocks)
            blocks[j] ^= 1 << i
        blocks.append(1 << i)
        grow(i + 1, blocks)
        blocks.pop()

    grow(0, [])
    return out


def partition_derivative(f: SetFunction, g, L: Sequence, x: Sequence) -> Fraction:
    """Mixed partial of H along the ordered coordinates L, via the partition sum.

    Each partition P of the positions of L contributes, for every ordered
    choice of distinct outer elements (v_1, ..., v_s) assigned to its blocks,
    Σ_T Δ_{V_P} f(T) Π_i ∂G_{v_i}/∂x_{T_i} Π_{w∈T} G_w Π_{w∉T∪V_P} (1 - G_w).
    """
    inner, ground = _compound_inputs(f, g)
    coords = [ground.index(c) if isinstance(c, str) else int(c) for c in L]
    if len(set(coords)) != len(coords):
        raise ValueError("differentiation coordinates must be distinct")
    if not 1 <= len(coords) <= MAX_PARTITION:
        raise ValueError(f"need 1..{MAX_PARTITION} coordinates, got {len(coords)}")
    if any(not 0 <= c < ground.size for c in coords):
        raise ValueError("coordinate outside the inner ground set")
    pt = _check_point(ground.size, x)
    G = [_fold(gv.values, gv.n, pt) for gv in inner]
    m = f.n
    full = (1 << m) - 1

    partial_cache: dict[tuple[int, int], Fraction] = {}

    def dG(v: int, block_mask: int) -> Fraction:
        key = (v, block_mask)
        if key not in partial_cache:
            partial_cache[key] = _fold(inner[v].values, inner[v].n, pt, block_mask)
        return partial_cache[key]

    outer_cache: dict[int, Fraction] = {}

    def outer(VP: int) -> Fraction:
        if VP not in outer_cache:
            rest = full & ~VP
            total = Fraction(0)
            for T in submasks(rest):
                w = Fraction(1)
                for i in range(m):
                    if T >> i & 1:
                        w *= G[i]
                    elif rest >> i & 1:
                        w *= 1 - G[i]
                total += difference(f, VP, T) * w
            outer_cache[VP] = total
        return outer_cache[VP]

    total = Fraction(0)
    for P in enumerate_partitions(len(coords)):
        block_masks = [sum(1 << coords[j] for j in bits(b)) for b in P.blocks]
        for vs in itertools.permutations(range(m), len(block_masks)):
            prod = Fraction(1)
            for v, bm in zip(vs, block_masks):
                prod *= dG(v, bm)
                if not prod:
                    break
            if prod:
                total += prod * outer(sum(1 << v for v in vs))
    return total


def threshold_violations(f: SetFunction) -> list[tuple[str, int, int | None]]:
    """Problems preventing ``f`` from being a threshold function.

    Entries are ("empty", 0, None), ("range", S, None) or
    ("monotone", S, T) with S ⊂ T and f(S) > f(T).
    """
    out: list[tuple[str, int, int | None]] = []
    if f.values[0] != 0:
        out.append(("empty", 0, None))
    for m, v in enumerate(f.values):
        if not 0 <= v <= 1:
            out.append(("range", m, None))
    for m in range(1 << f.n):
        for i in range(f.n):
            big = m | 1 << i
            if big != m and f.values[m] > f.values[big]:
                out.append(("monotone", m, big))
    return out
