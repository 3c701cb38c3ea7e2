"""General-threshold and triggering diffusion on small directed graphs.

Exact spread is computed three ways:

* ``breakpoint``: each threshold θ_v ~ U[0,1] only matters through which
  interval between consecutive attainable values of f_v it falls in, so the
  cascade is run once per combination of intervals and weighted by the
  interval lengths.
* ``closure``: a subset recursion over least fixed points. The final active
  set is X exactly when X is generated from the seeds using nodes of X only
  and every node outside X stays below threshold on X.
* live-edge enumeration for triggering instances.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Sequence

import numpy as np

from .setfn import GroundSet, SetFunction, bits, submasks, threshold_violations

DEFAULT_BUDGET = 10**7
MAX_NODES = 62
MAX_INDEGREE = 12


class BudgetExceeded(RuntimeError):
    """An exact oracle would need more enumeration than allowed."""

    def __init__(self, what: str, size: int, budget: int):
        super().__init__(f"{what}: {size} combinations exceeds budget {budget}")
        self.what = what
        self.size = size
        self.budget = budget


def default_budget() -> int:
    env = os.environ.get("ADK_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


@dataclass(frozen=True)
class DirectedGraph:
    labels: tuple[str, ...]
    in_masks: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "in_masks", tuple(int(m) for m in self.in_masks))
        n = len(labels)
        if len(set(labels)) != n:
            raise ValueError("node labels must be distinct")
        if len(self.in_masks) != n:
            raise ValueError("one in-neighbor mask per node required")
        if n > MAX_NODES:
            raise ValueError(f"at most {MAX_NODES} nodes supported")
        for v, m in enumerate(self.in_masks):
            if m < 0 or m >> n:
                raise ValueError(f"in-neighbor mask of {labels[v]} out of range")
            if m >> v & 1:
                raise ValueError(f"self-loop at {labels[v]}")

    @classmethod
    def from_edges(cls, labels: Sequence[str], edges: Iterable[tuple]) -> DirectedGraph:
        labels = tuple(str(x) for x in labels)
        idx = {label: i for i, label in enumerate(labels)}
        masks = [0] * len(labels)
        for u, v in edges:
            u = idx[str(u)] if not isinstance(u, int) else u
            v = idx[str(v)] if not isinstance(v, int) else v
            masks[v] |= 1 << u
        return cls(labels, tuple(masks))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def full(self) -> int:
        return (1 << self.n) - 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown node {label!r}") from None

    def mask(self, labels: Iterable[str]) -> int:
        m = 0
        for label in labels:
            m |= 1 << self.index(label)
        return m

    def labels_of(self, mask: int) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in bits(mask))

    def in_neighbors(self, v: int) -> tuple[int, ...]:
        return tuple(bits(self.in_masks[v]))

    def in_ground(self, v: int) -> GroundSet:
        return GroundSet(tuple(self.labels[u] for u in self.in_neighbors(v)))

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v in range(self.n) for u in bits(self.in_masks[v])]

    @cached_property
    def out_masks(self) -> tuple[int, ...]:
        out = [0] * self.n
        for u, v in self.edges():
            out[u] |= 1 << v
        return tuple(out)

    def reachable(self, S: int) -> int:
        """Nodes reachable from S (S included)."""
        seen, frontier = S, S
        while frontier:
            nxt = 0
            for u in bits(frontier):
                nxt |= self.out_masks[u]
            frontier = nxt & ~seen
            seen |= frontier
        return seen

    def ancestors(self, v: int) -> int:
        """Nodes with a path to v (v included)."""
        seen, frontier = 1 << v, 1 << v
        while frontier:
            nxt = 0
            for w in bits(frontier):
                nxt |= self.in_masks[w]
            frontier = nxt & ~seen
            seen |= frontier
        return seen

    def local_mask(self, v: int, C: int) -> int:
        """Restrict C to IN(v) and renumber along IN(v)'s ascending order."""
        out = 0
        for j, u in enumerate(self.in_neighbors(v)):
            if C >> u & 1:
                out |= 1 << j
        return out

    def global_mask(self, v: int, local: int) -> int:
        nbrs = self.in_neighbors(v)
        return sum(1 << nbrs[j] for j in bits(local))


def _check_tables(graph: DirectedGraph, tables: Sequence[SetFunction], what: str) -> tuple:
    tables = tuple(tables)
    if len(tables) != graph.n:
        raise ValueError(f"one {what} per node required")
    for v, t in enumerate(tables):
        if t.ground != graph.in_ground(v):
            raise ValueError(
                f"{what} of {graph.labels[v]} is over {t.ground.labels}, "
                f"expected in-neighbors {graph.in_ground(v).labels}"
            )
        if t.n > MAX_INDEGREE:
            raise ValueError(f"in-degree of {graph.labels[v]} exceeds {MAX_INDEGREE}")
    return tables


@dataclass(frozen=True)
class GTInstance:
    """Graph plus one threshold function per node, each over IN(v)."""

    graph: DirectedGraph
    thresholds: tuple[SetFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", _check_tables(self.graph, self.thresholds, "threshold"))

    @property
    def n(self) -> int:
        return self.graph.n

    def value(self, v: int, C: int) -> Fraction:
        """f_v(C ∩ IN(v)) for a global node set C."""
        return self.thresholds[v].values[self.graph.local_mask(v, C)]


@dataclass(frozen=True)
class TriggeringInstance:
    """Graph plus one triggering-set distribution per node, over subsets of IN(v)."""

    graph: DirectedGraph
    dists: tuple[SetFunction, ...]

    def __post_init__(self):
        dists = _check_tables(self.graph, self.dists, "distribution")
        object.__setattr__(self, "dists", dists)
        for v, q in enumerate(dists):
            problem = distribution_problem(q)
            if problem:
                raise ValueError(f"node {self.graph.labels[v]}: {problem}")

    @property
    def n(self) -> int:
        return self.graph.n


def distribution_problem(q: SetFunction) -> str | None:
    for m, p in enumerate(q.values):
        if p < 0:
            return f"negative probability {p} at {q.ground.labels_of(m)}"
    total = sum(q.values, Fraction(0))
    if total != 1:
        return f"probabilities sum to {total} (deficit {1 - total})"
    return None


@dataclass(frozen=True)
class LayerAssignment:
    """Layer index (1 = top, m = bottom) for every node."""

    layer: tuple[int, ...]
    m: int

    def __post_init__(self):
        object.__setattr__(self, "layer", tuple(int(i) for i in self.layer))
        if self.m < 1:
            raise ValueError("need at least one layer")
        for i in self.layer:
            if not 1 <= i <= self.m:
                raise ValueError(f"layer {i} outside 1..{self.m}")

    def nodes_in(self, i: int) -> int:
        return sum(1 << v for v, li in enumerate(self.layer) if li == i)

    @property
    def bottom(self) -> int:
        return self.nodes_in(self.m)

    def layered_violations(self, graph: DirectedGraph) -> list[tuple[int, int]]:
        """Edges (u, v) not going from layer i+1 to layer i."""
        if len(self.layer) != graph.n:
            raise ValueError("layer assignment size does not match graph")
        return [(u, v) for u, v in graph.edges() if self.layer[u] != self.layer[v] + 1]

    def is_layered(self, graph: DirectedGraph) -> bool:
        return not self.layered_violations(graph)


@dataclass(frozen=True)
class SpreadResult:
    value: Fraction | float
    per_node: tuple | None = None
    stderr: float | None = None
    exact: bool = True


@dataclass(frozen=True)
class Violation:
    node: int
    kind: str          # "empty" | "range" | "monotone"
    subset: int        # local mask over IN(node)
    superset: int | None = None


def validate_gt(inst: GTInstance) -> list[Violation]:
    out = []
    for v, f in enumerate(inst.thresholds):
        for kind, S, T in threshold_violations(f):
            out.append(Violation(v, kind, S, T))
    return out


def _require_valid(inst: GTInstance) -> None:
    bad = validate_gt(inst)
    if bad:
        b = bad[0]
        raise ValueError(
            f"invalid threshold at {inst.graph.labels[b.node]}: {b.kind} "
            f"({len(bad)} violation(s))"
        )


def cascade(inst: GTInstance, S: int, levels: Sequence) -> int:
    """Least fixed point of C -> S ∪ {v : f_v(C ∩ IN(v)) >= levels[v]}."""
    if len(levels) != inst.n:
        raise ValueError("one activation level per node required")
    C = S
    while True:
        nxt = S
        for v in range(inst.n):
            if inst.value(v, C) >= levels[v]:
                nxt |= 1 << v
        nxt |= C
        if nxt == C:
            return C
        C = nxt


# -- vectorised enumeration -------------------------------------------------

def _local_index(active: np.ndarray, nbrs: Sequence[int]) -> np.ndarray:
    loc = np.zeros(active.shape, dtype=np.int64)
    for j, u in enumerate(nbrs):
        loc |= ((active >> u) & 1) << j
    return loc


def _run_rules(graph: DirectedGraph, active: np.ndarray, rules: dict[int, np.ndarray],
               choice: dict[int, np.ndarray] | None) -> np.ndarray:
    """Iterate activation rules until stable.

    ``rules[v]`` is a boolean table [choice, local in-mask] (or [local] when
    ``choice`` is None) telling whether v activates.
    """
    nbrs = {v: graph.in_neighbors(v) for v in rules}
    while True:
        before = active.copy()
        for v, table in rules.items():
            loc = _local_index(active, nbrs[v])
            fire = table[choice[v], loc] if choice is not None else table[loc]
            active |= fire.astype(np.int64) << v
        if np.array_equal(before, active):
            return active


def _grid(sizes: Sequence[int], budget: int, what: str) -> list[np.ndarray]:
    total = math.prod(sizes) if sizes else 1
    if total > budget:
        raise BudgetExceeded(what, total, budget)
    if not sizes:
        return []
    return list(np.unravel_index(np.arange(total, dtype=np.int64), tuple(sizes)))


def _weighted_node_sums(nodes: Sequence[int], choices: list[np.ndarray], weights: list[list[Fraction]],
                        finals: np.ndarray, targets: Iterable[int]) -> dict[int, Fraction]:
    """Exact Σ over grid rows of Π weights, restricted to rows whose final set holds t."""
    dens = []
    nums = []
    for w in weights:
        den = reduce(lambda a, b: a * b // math.gcd(a, b), (x.denominator for x in w), 1)
        dens.append(den)
        nums.append([int(x * den) for x in w])
    total_den = math.prod(dens)
    dtype = np.int64 if total_den < 2**62 else object
    prod = np.ones(finals.shape, dtype=dtype)
    for c, num in zip(choices, nums):
        prod = prod * np.asarray(num, dtype=dtype)[c]
    out = {}
    for t in targets:
        hit = ((finals >> t) & 1).astype(bool)
        out[t] = Fraction(int(prod[hit].sum()), total_den)
    return out


def breakpoint_intervals(f: SetFunction) -> tuple[list[Fraction], list[Fraction]]:
    """Upper endpoints and lengths of the threshold intervals of f.

    The intervals (b_{i-1}, b_i] run over the sorted distinct positive values
    of f together with 1; inside one interval every comparison f(C) >= θ has
    the same outcome as with θ = b_i.
    """
    uppers = sorted({v for v in f.values if v > 0} | {Fraction(1)})
    lengths = [b - a for a, b in zip([Fraction(0)] + uppers[:-1], uppers)]
    return uppers, lengths


def breakpoint_count(inst: GTInstance) -> int:
    return math.prod(len(breakpoint_intervals(f)[0]) for f in inst.thresholds)


def _exact_breakpoint(inst: GTInstance, S: int, budget: int) -> list[Fraction]:
    g = inst.graph
    # Only nodes reachable from S and not seeded can change state.
    movable = [v for v in bits(g.reachable(S) & ~S) if g.in_masks[v]]
    rules, weights = {}, []
    for v in movable:
        f = inst.thresholds[v]
        uppers, lengths = breakpoint_intervals(f)
        rules[v] = np.array([[val >= b for val in f.values] for b in uppers], dtype=bool)
        weights.append(lengths)
    choices = _grid([len(w) for w in weights], budget, "breakpoint enumeration")
    rows = len(choices[0]) if choices else 1
    active = np.full(rows, S, dtype=np.int64)
    finals = _run_rules(g, active, rules, dict(zip(movable, choices)))
    sums = _weighted_node_sums(movable, choices, weights, finals, movable)
    return [Fraction(1) if S >> v & 1 else sums.get(v, Fraction(0)) for v in range(g.n)]


def _closure_distribution(inst: GTInstance, S: int, budget: int) -> dict[int, Fraction]:
    """Pr[final active set = X] for every X ⊇ S with nonzero probability."""
    g = inst.graph
    zone = g.reachable(S)
    free = zone & ~S
    cost = 3 ** free.bit_count()
    if cost > budget:
        raise BudgetExceeded("closure recursion", cost, budget)
    # Common denominator so the recursion runs on integers.
    den = 1
    for f in inst.thresholds:
        for val in f.values:
            den = den * val.denominator // math.gcd(den, val.denominator)
    num = [[val.numerator * (den // val.denominator) for val in f.values] for f in inst.thresholds]

    def stay(v: int, Y: int) -> int:
        return den - num[v][g.local_mask(v, Y)]

    # reached[Y]: numerator over den^|Y\S| of Pr[lfp confined to Y equals Y]
    reached: dict[int, int] = {}
    subsets = sorted((S | m for m in submasks(free)), key=lambda m: m.bit_count())
    for X in subsets:
        extra = (X & ~S).bit_count()
        acc = den ** extra
        for Yf in submasks(X & ~S):
            Y = S | Yf
            if Y == X or not reached.get(Y):
                continue
            p = reached[Y]
            for v in bits(X & ~Y):
                p *= stay(v, Y)
                if not p:
                    break
            acc -= p
        reached[X] = acc
    out = {}
    depth = free.bit_count()
    for X, r in reached.items():
        if not r:
            continue
        p = r
        for v in bits(free & ~X):
            p *= stay(v, X)
            if not p:
                break
        if p:
            out[X] = Fraction(p, den ** depth)
    return out


def exact_spread(inst: GTInstance, S: int, *, method: str = "breakpoint",
                 budget: int | None = None) -> SpreadResult:
    """Exact σ(S) and every P_v(S).

    ``method`` is "breakpoint" (interval enumeration) or "closure" (subset
    recursion, 3^r steps for r reachable unseeded nodes); both refuse work
    beyond ``budget``.
    """
    _require_valid(inst)
    if S >> inst.n:
        raise ValueError("seed set outside the node set")
    if method == "breakpoint":
        per = _exact_breakpoint(inst, S, budget or default_budget())
    elif method == "closure":
        dist = _closure_distribution(inst, S, budget or default_budget())
        per = [sum((p for X, p in dist.items() if X >> v & 1), Fraction(0)) for v in range(inst.n)]
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpreadResult(sum(per, Fraction(0)), tuple(per), None, True)


def spread_table(inst: GTInstance, *, method: str = "closure", budget: int | None = None
                 ) -> list[tuple[Fraction, ...]]:
    """``table[S][v] = P_v(S)`` for every seed set S."""
    return [exact_spread(inst, S, method=method, budget=budget).per_node for S in range(1 << inst.n)]


def layered_activation(inst: GTInstance, layers: LayerAssignment, S_m: int, v: int) -> Fraction:
    """P_v(S_m) by descending one layer at a time from the bottom.

    The active set of layer j-1 is a product distribution given the active
    set of layer j, so P_v(S_j) = Σ_{S_{j-1}} Pr[S_{j-1} | S_j] P_v(S_{j-1}).
    """
    g = inst.graph
    bad = layers.layered_violations(g)
    if bad:
        u, w = bad[0]
        raise ValueError(f"edge {g.labels[u]}->{g.labels[w]} violates the layering")
    if S_m & ~layers.bottom:
        raise ValueError("seeds must lie in the bottom layer")
    _require_valid(inst)
    target = layers.layer[v]
    memo: dict[tuple[int, int], Fraction] = {}

    def prob(j: int, Sj: int) -> Fraction:
        if j == target:
            return Fraction(1) if Sj >> v & 1 else Fraction(0)
        key = (j, Sj)
        if key in memo:
            return memo[key]
        upper = bits(layers.nodes_in(j - 1))
        fu = [inst.value(u, Sj) for u in upper]
        total = Fraction(0)
        for sel in range(1 << len(upper)):
            w = Fraction(1)
            for idx, p in enumerate(fu):
                w *= p if sel >> idx & 1 else 1 - p
                if not w:
                    break
            if w:
                total += w * prob(j - 1, sum(1 << upper[i] for i in bits(sel)))
        memo[key] = total
        return total

    return prob(layers.m, S_m)


def _rng_block(rng_seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[rng_seed & (2**64 - 1), block]))


MC_BLOCK = 8192


def monte_carlo_spread(inst: GTInstance, S: int, trials: int, rng_seed: int) -> SpreadResult:
    """Mean final active-set size over ``trials`` cascades with uniform levels.

    Trials are drawn in fixed blocks, each from its own counter-keyed Philox
    stream, so results depend only on (rng_seed, trials).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _require_valid(inst)
    g = inst.graph
    movable = [v for v in bits(g.reachable(S) & ~S) if g.in_masks[v]]
    rules = {v: np.array([float(x) for x in inst.thresholds[v].values]) for v in movable}
    nbrs = {v: g.in_neighbors(v) for v in movable}
    sizes = np.empty(trials, dtype=np.float64)
    hits = np.zeros(g.n, dtype=np.int64)
    for block, start in enumerate(range(0, trials, MC_BLOCK)):
        count = min(MC_BLOCK, trials - start)
        # θ ~ U(0, 1]: flip the generator's [0, 1) draws.
        levels = 1.0 - _rng_block(rng_seed, block).random((count, g.n))
        active = np.full(count, S, dtype=np.int64)
        while True:
            before = active.copy()
            for v in movable:
                loc = _local_index(active, nbrs[v])
                fire = rules[v][loc] >= levels[:, v]
                active |= fire.astype(np.int64) << v
            if np.array_equal(before, active):
                break
        counts = np.zeros(count, dtype=np.int64)
        for v in range(g.n):
            bit = (active >> v) & 1
            counts += bit
            hits[v] += int(bit.sum())
        sizes[start:start + count] = counts
    mean = float(sizes.mean())
    stderr = float(sizes.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return SpreadResult(mean, tuple(float(h) / trials for h in hits), stderr, False)


def _support(q: SetFunction) -> tuple[list[int], list[Fraction]]:
    masks = [m for m, p in enumerate(q.values) if p > 0]
    return masks, [q.values[m] for m in masks]


def live_edge_count(inst: TriggeringInstance) -> int:
    return math.prod(len(_support(q)[0]) for q in inst.dists)


def live_edge_spread(inst: TriggeringInstance, S: int, budget: int | None = None) -> SpreadResult:
    """Exact σ(S) as expected reachability over all live-edge graphs."""
    budget = budget or default_budget()
    g = inst.graph
    movable = [v for v in bits(g.reachable(S) & ~S) if g.in_masks[v]]
    rules, weights = {}, []
    for v in movable:
        masks, probs = _support(inst.dists[v])
        rules[v] = np.array([[(T & loc) != 0 for loc in range(1 << len(g.in_neighbors(v)))]
                             for T in masks], dtype=bool)
        weights.append(probs)
    choices = _grid([len(w) for w in weights], budget, "live-edge enumeration")
    rows = len(choices[0]) if choices else 1
    finals = _run_rules(g, np.full(rows, S, dtype=np.int64), rules, dict(zip(movable, choices)))
    sums = _weighted_node_sums(movable, choices, weights, finals, movable)
    per = [Fraction(1) if S >> v & 1 else sums.get(v, Fraction(0)) for v in range(g.n)]
    return SpreadResult(sum(per, Fraction(0)), tuple(per), None, True)


def reach_distribution(inst: TriggeringInstance, u: int, budget: int | None = None) -> SetFunction:
    """R_u(T) = Pr[the set of nodes that reach u along live edges is exactly T]."""
    budget = budget or default_budget()
    g = inst.graph
    relevant = [v for v in bits(g.ancestors(u)) if g.in_masks[v]]
    weights, trig = [], {}
    for v in relevant:
        masks, probs = _support(inst.dists[v])
        trig[v] = np.array([g.global_mask(v, T) for T in masks], dtype=np.int64)
        weights.append(probs)
    choices = _grid([len(w) for w in weights], budget, "live-edge enumeration")
    rows = len(choices[0]) if choices else 1
    reach = np.full(rows, 1 << u, dtype=np.int64)
    pick = dict(zip(relevant, choices))
    while True:
        before = reach.copy()
        for v in relevant:
            inside = ((reach >> v) & 1).astype(bool)
            reach |= np.where(inside, trig[v][pick[v]], 0)
        if np.array_equal(before, reach):
            break
    values = [Fraction(0)] * (1 << g.n)
    if not relevant:
        values[1 << u] = Fraction(1)
    else:
        dens, nums = [], []
        for w in weights:
            den = reduce(lambda a, b: a * b // math.gcd(a, b), (x.denominator for x in w), 1)
            dens.append(den)
            nums.append([int(x * den) for x in w])
        total_den = math.prod(dens)
        dtype = np.int64 if total_den < 2**62 else object
        prod = np.ones(rows, dtype=dtype)
        for c, num in zip(choices, nums):
            prod = prod * np.asarray(num, dtype=dtype)[c]
        for T in np.unique(reach):
            values[int(T)] = Fraction(int(prod[reach == T].sum()), total_den)
    return SetFunction(GroundSet(g.labels), tuple(values))
