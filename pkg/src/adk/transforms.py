"""Constructive equivalences between diffusion instances.

* triggering <-> general threshold conversion,
* lifting a layered instance so every seed sits in the bottom layer,
* turning a DAG instance into a layered one with dummy relay nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .diffusion import (
    DirectedGraph,
    GTInstance,
    LayerAssignment,
    TriggeringInstance,
    exact_spread,
    validate_gt,
)
from .setfn import ADkReport, GroundSet, SetFunction, bits, is_adk, mobius, mobius_inverse


class NotADInfinity(ValueError):
    """A threshold function has a negative triggering-set coefficient."""

    def __init__(self, node: int, label: str, subset: tuple[str, ...], value: Fraction):
        super().__init__(
            f"threshold of {label} is not AD-inf: coefficient of {{{','.join(subset)}}} is {value}"
        )
        self.node = node
        self.label = label
        self.subset = subset
        self.value = value


class NotADAG(ValueError):
    def __init__(self, cycle: tuple[str, ...]):
        super().__init__(f"graph has a cycle: {' -> '.join(cycle + cycle[:1])}")
        self.cycle = cycle


@dataclass(frozen=True)
class NodeMap:
    """How original nodes appear in a transformed instance.

    ``forward[v]`` lists every image of original node v, ``bottom_copy[v]``
    is the image seeded in place of v (lift only), and ``kept`` is the mask
    of image nodes whose activation probabilities add up to σ.
    """

    forward: tuple[tuple[int, ...], ...]
    bottom_copy: tuple[int, ...] | None
    kept: int

    @classmethod
    def identity(cls, n: int) -> NodeMap:
        return cls(tuple((v,) for v in range(n)), None, (1 << n) - 1)

    def seed_image(self, S: int) -> int:
        out = 0
        for v in bits(S):
            out |= 1 << (self.bottom_copy[v] if self.bottom_copy is not None else self.forward[v][0])
        return out

    def to_labels(self, original: DirectedGraph, image: DirectedGraph) -> dict:
        out = {
            "forward": {original.labels[v]: [image.labels[w] for w in ws]
                        for v, ws in enumerate(self.forward)},
            "kept": list(image.labels_of(self.kept)),
        }
        if self.bottom_copy is not None:
            out["bottom_copy"] = {original.labels[v]: image.labels[w]
                                  for v, w in enumerate(self.bottom_copy)}
        return out


def triggering_to_gt(tr: TriggeringInstance) -> GTInstance:
    """f_v(C) = Pr[T_v ∩ C ≠ ∅] = 1 - Σ_{A ⊆ IN(v) \\ C} q_v(A)."""
    thresholds = []
    for q in tr.dists:
        below = mobius_inverse(q)  # below[B] = Pr[T_v ⊆ B]
        full = q.ground.full
        thresholds.append(SetFunction(q.ground, tuple(1 - below.values[full & ~C]
                                                       for C in range(1 << q.n))))
    return GTInstance(tr.graph, tuple(thresholds))


def triggering_coefficients(f: SetFunction) -> SetFunction:
    """q(A) = Σ_{B ⊆ A} (-1)^{|A|-|B|} (1 - f(IN \\ B)); a distribution iff f is AD-inf."""
    full = f.ground.full
    return mobius(SetFunction(f.ground, tuple(1 - f.values[full & ~B] for B in range(1 << f.n))))


def gt_to_triggering(gt: GTInstance) -> TriggeringInstance:
    bad = validate_gt(gt)
    if bad:
        raise ValueError(f"invalid threshold at {gt.graph.labels[bad[0].node]}: {bad[0].kind}")
    dists = []
    for v, f in enumerate(gt.thresholds):
        q = triggering_coefficients(f)
        for A, p in enumerate(q.values):
            if p < 0:
                raise NotADInfinity(v, gt.graph.labels[v], q.ground.labels_of(A), p)
        dists.append(q)
    return TriggeringInstance(gt.graph, tuple(dists))


def _find_cycle(graph: DirectedGraph, remaining: int) -> tuple[str, ...]:
    # Every remaining node has a remaining in-neighbor; walk backwards until a repeat.
    v = bits(remaining)[0]
    path, seen = [], {}
    while v not in seen:
        seen[v] = len(path)
        path.append(v)
        v = bits(graph.in_masks[v] & remaining)[0]
    cycle = path[seen[v]:]
    cycle.reverse()  # walked against edge direction
    return tuple(graph.labels[u] for u in cycle)


def dag_layering(graph: DirectedGraph) -> LayerAssignment:
    """Peel in-degree-0 nodes into the deepest layer, repeatedly; top layer is 1."""
    remaining = graph.full
    peel = [0] * graph.n
    rounds = 0
    while remaining:
        sources = [v for v in bits(remaining) if not graph.in_masks[v] & remaining]
        if not sources:
            raise NotADAG(_find_cycle(graph, remaining))
        for v in sources:
            peel[v] = rounds
            remaining &= ~(1 << v)
        rounds += 1
    m = max(rounds, 1)
    return LayerAssignment(tuple(m - p for p in peel), m)


def _fresh_label(taken: set[str], base: str) -> str:
    label = base
    while label in taken:
        label += "'"
    taken.add(label)
    return label


def _relabelled_table(f: SetFunction, ground_labels: tuple[str, ...], old_pos: Sequence[int]) -> SetFunction:
    """Table on new in-neighbors; new local bit j stands for old local bit old_pos[j]."""
    vals = []
    for loc in range(1 << len(old_pos)):
        old = sum(1 << old_pos[j] for j in bits(loc))
        vals.append(f.values[old])
    return SetFunction(GroundSet(ground_labels), tuple(vals))


def dag_to_layered(gt: GTInstance, layers: LayerAssignment | None = None
                   ) -> tuple[GTInstance, LayerAssignment, NodeMap]:
    """Replace each skip-layer edge spanning q layers by a chain of q-1 dummy relays.

    ``layers`` defaults to :func:`dag_layering`; a supplied assignment must
    put every in-neighbor strictly deeper than its target.
    """
    g = gt.graph
    if layers is None:
        layers = dag_layering(g)
    for u, v in g.edges():
        if layers.layer[u] <= layers.layer[v]:
            raise ValueError(f"edge {g.labels[u]}->{g.labels[v]} does not point upward")
    labels = list(g.labels)
    taken = set(labels)
    layer = list(layers.layer)
    # feed[(u, v)] = node that delivers u's state to v in the image
    feed: dict[tuple[int, int], int] = {}
    dummy_in: dict[int, int] = {}
    for u, v in g.edges():
        span = layers.layer[u] - layers.layer[v]
        prev = u
        for step in range(1, span):
            d = len(labels)
            labels.append(_fresh_label(taken, f"{g.labels[u]}~{g.labels[v]}.{step}"))
            layer.append(layers.layer[u] - step)
            dummy_in[d] = prev
            prev = d
        feed[(u, v)] = prev
    n2 = len(labels)
    in_masks = [0] * n2
    for (u, v), w in feed.items():
        in_masks[v] |= 1 << w
    for d, src in dummy_in.items():
        in_masks[d] = 1 << src
    graph2 = DirectedGraph(tuple(labels), tuple(in_masks))
    thresholds = []
    for x in range(n2):
        nbrs = graph2.in_neighbors(x)
        names = tuple(labels[w] for w in nbrs)
        if x in dummy_in:
            thresholds.append(SetFunction(graph2.in_ground(x), (0, 1)))
            continue
        old_nbrs = g.in_neighbors(x)
        back = {feed[(u, x)]: u for u in old_nbrs}
        old_pos = [old_nbrs.index(back[w]) for w in nbrs]
        thresholds.append(_relabelled_table(gt.thresholds[x], names, old_pos))
    image = GTInstance(graph2, tuple(thresholds))
    nmap = NodeMap(tuple((v,) for v in range(g.n)), None, g.full)
    return image, LayerAssignment(tuple(layer), layers.m), nmap


def lift_layered(gt: GTInstance, layers: LayerAssignment) -> tuple[GTInstance, LayerAssignment, NodeMap]:
    """Copy construction that moves every seed to the bottom layer.

    Layer i of the image holds copies V_{i,1}, ..., V_{i,i} of original layers
    1..i. A copy of v in V_j sitting in image layer i < m listens to its copy
    directly underneath (threshold value 1 once that copy is active); the
    diagonal copy (i = j) additionally evaluates f_v on the diagonal copies of
    v's in-neighbors one layer down.
    """
    g = gt.graph
    bad = layers.layered_violations(g)
    if bad:
        u, w = bad[0]
        raise ValueError(f"edge {g.labels[u]}->{g.labels[w]} violates the layering")
    m = layers.m
    if m < 2:
        raise ValueError("lift needs at least two layers (pad an empty top layer)")
    by_layer = {j: bits(layers.nodes_in(j)) for j in range(1, m + 1)}
    index: dict[tuple[int, int, int], int] = {}
    labels: list[str] = []
    layer_of: list[int] = []
    taken: set[str] = set()
    for i in range(1, m + 1):
        for j in range(1, i + 1):
            for v in by_layer[j]:
                index[(i, j, v)] = len(labels)
                labels.append(_fresh_label(taken, f"{g.labels[v]}@{i}.{j}"))
                layer_of.append(i)
    in_masks = [0] * len(labels)
    for (i, j, v), x in index.items():
        if i == m:
            continue
        in_masks[x] |= 1 << index[(i + 1, j, v)]
        if i == j:
            for u in g.in_neighbors(v):
                in_masks[x] |= 1 << index[(i + 1, i + 1, u)]
    graph2 = DirectedGraph(tuple(labels), tuple(in_masks))
    thresholds: list[SetFunction | None] = [None] * len(labels)
    for (i, j, v), x in index.items():
        ground = graph2.in_ground(x)
        if i == m:
            thresholds[x] = SetFunction(ground, (0,))
            continue
        nbrs = graph2.in_neighbors(x)
        under = nbrs.index(index[(i + 1, j, v)])
        # local position in f_v's table of each diagonal in-neighbor copy
        orig_pos = {}
        if i == j:
            old = g.in_neighbors(v)
            for u in old:
                orig_pos[nbrs.index(index[(i + 1, i + 1, u)])] = old.index(u)
        vals = []
        for loc in range(1 << len(nbrs)):
            if loc >> under & 1:
                vals.append(Fraction(1))
            elif i == j:
                old_loc = sum(1 << orig_pos[b] for b in bits(loc) if b in orig_pos)
                vals.append(gt.thresholds[v].values[old_loc])
            else:
                vals.append(Fraction(0))
        thresholds[x] = SetFunction(ground, tuple(vals))
    image = GTInstance(graph2, tuple(thresholds))
    forward = []
    bottom = []
    kept = 0
    for v in range(g.n):
        j = layers.layer[v]
        forward.append(tuple(index[(i, j, v)] for i in range(j, m + 1)))
        bottom.append(index[(m, j, v)])
        kept |= 1 << index[(j, j, v)]
    return image, LayerAssignment(tuple(layer_of), m), NodeMap(tuple(forward), tuple(bottom), kept)


@dataclass(frozen=True)
class SeedCheck:
    seeds: int
    original: Fraction
    image: Fraction

    @property
    def difference(self) -> Fraction:
        return self.image - self.original


@dataclass(frozen=True)
class TransformReport:
    rows: tuple[SeedCheck, ...]
    adk: tuple[tuple[int, ADkReport], ...] = ()

    @property
    def ok(self) -> bool:
        return all(r.difference == 0 for r in self.rows) and all(rep.holds for _, rep in self.adk)


def verify_transform(original: GTInstance, image: GTInstance, nmap: NodeMap,
                     seeds: Iterable[int] | None = None, k=None, *,
                     method: str = "breakpoint", budget: int | None = None) -> TransformReport:
    """Compare σ(S) with Σ_{u∈kept} P'_u(S') per seed set; optionally AD-k check image thresholds."""
    if seeds is None:
        seeds = range(1 << original.n)
    rows = []
    for S in seeds:
        left = exact_spread(original, S, method=method, budget=budget).value
        per = exact_spread(image, nmap.seed_image(S), method=method, budget=budget).per_node
        right = sum((per[u] for u in bits(nmap.kept)), Fraction(0))
        rows.append(SeedCheck(S, left, right))
    adk = ()
    if k is not None:
        adk = tuple((x, is_adk(f, k)) for x, f in enumerate(image.thresholds) if f.n)
    return TransformReport(tuple(rows), adk)
