"""Random locally AD-k instances, exact global AD-k checks and campaigns.

Regression campaigns cover cases where local AD-k is known to give global
AD-k (layered graphs, DAGs, AD-inf on any graph, AD-2 on any graph). On
general graphs with 3 <= k <= n-1 the question is open, and a campaign
searches for a counterexample instead.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .diffusion import (
    BudgetExceeded,
    DirectedGraph,
    GTInstance,
    LayerAssignment,
    TriggeringInstance,
    breakpoint_count,
    default_budget,
    reach_distribution,
    spread_table,
)
from .setfn import (
    INF,
    ADkReport,
    GroundSet,
    SetFunction,
    bits,
    difference,
    is_adk,
    mobius,
    resolve_k,
    submasks,
)
from .fileformat import digest, serialize_instance
from .transforms import gt_to_triggering, triggering_to_gt

GRAPH_KINDS = ("layered", "dag", "general")
FAMILIES = ("triggering-derived", "rejection-sampled", "coverage", "truncated")
MAX_EXACT_NODES = 8
REJECTION_BUDGET = 10_000


class GenerationBudgetExhausted(RuntimeError):
    pass


def format_k(k) -> str:
    return "inf" if k is None or k == INF else str(int(k))


def parse_k(text) -> int | float:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return INF if text == INF else int(text)
    if str(text).lower() in ("inf", "infinity", "∞"):
        return INF
    k = int(text)
    if k < 1:
        raise ValueError("k must be >= 1")
    return k


@dataclass(frozen=True)
class GenConfig:
    graph_kind: str
    n: int
    edge_density: Fraction
    k: int | float
    function_family: str
    rng_seed: int
    strict: bool = False
    max_indegree: int = 4
    max_layers: int = 4

    def __post_init__(self):
        object.__setattr__(self, "edge_density", Fraction(self.edge_density))
        object.__setattr__(self, "k", parse_k(self.k))
        if self.graph_kind not in GRAPH_KINDS:
            raise ValueError(f"graph_kind must be one of {GRAPH_KINDS}")
        if self.function_family not in FAMILIES:
            raise ValueError(f"function_family must be one of {FAMILIES}")
        if not 1 <= self.n <= MAX_EXACT_NODES:
            raise ValueError(f"n must be in 1..{MAX_EXACT_NODES}")
        if not 0 <= self.edge_density <= 1:
            raise ValueError("edge_density must lie in [0, 1]")
        if self.graph_kind == "layered" and self.n < 2:
            raise ValueError("layered graphs need n >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edge_density"] = str(self.edge_density)
        d["k"] = format_k(self.k)
        return d

    @property
    def mode(self) -> str:
        if self.graph_kind == "general" and self.k != INF and 3 <= self.k <= self.n - 1:
            return "search"
        return "regression"


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed & (2**63 - 1), index])


# -- set-function families ---------------------------------------------------

def or_combination(ground: GroundSet, coeffs: dict[int, int], total: int) -> SetFunction:
    """f(C) = Σ_B coeffs[B] [B ∩ C ≠ ∅] / total."""
    return SetFunction.from_function(
        ground, lambda C: Fraction(sum(c for B, c in coeffs.items() if B & C), total)
    )


def coverage_function(ground: GroundSet, items: list[tuple[int, int]], total: int | None = None) -> SetFunction:
    """Weighted coverage: item (weight, cover mask) counts once any element of its cover is chosen."""
    coeffs: dict[int, int] = {}
    for w, cover in items:
        coeffs[cover] = coeffs.get(cover, 0) + w
    return or_combination(ground, coeffs, total if total is not None else sum(w for w, _ in items))


def _random_cover(rng: np.random.Generator, d: int) -> int:
    return int(rng.integers(1, 1 << d))


def _draw(ground: GroundSet, k: int, family: str, rng: np.random.Generator) -> SetFunction:
    d = ground.size
    if d == 0:
        return SetFunction(ground, (0,))
    if family == "triggering-derived":
        weights = rng.integers(0, 5, size=1 << d)
        if not weights.any():
            weights[-1] = 1
        total = int(weights.sum())
        # f(C) = 1 - Pr[T ⊆ ground \ C]
        below = [0] * (1 << d)
        for A in range(1 << d):
            below[A] = sum(int(weights[B]) for B in submasks(A))
        full = ground.full
        return SetFunction.from_function(ground, lambda C: 1 - Fraction(below[full & ~C], total))
    if family == "coverage":
        items = [(int(rng.integers(1, 5)), _random_cover(rng, d)) for _ in range(int(rng.integers(1, 2 * d + 2)))]
        weight = sum(w for w, _ in items)
        return coverage_function(ground, items, weight + int(rng.integers(0, weight // 2 + 1)))
    if family == "truncated":
        base = _draw(ground, k, "coverage", rng)
        levels = sorted({v for v in base.values if v > 0})
        cap = levels[int(rng.integers(0, len(levels)))]
        return SetFunction(ground, tuple(min(v, cap) for v in base.values))
    if family == "rejection-sampled":
        coeffs = {}
        for B in range(1, 1 << d):
            if B.bit_count() <= k:
                coeffs[B] = int(rng.integers(0, 4))
            else:
                coeffs[B] = int(rng.integers(-2, 3))
        total = sum(coeffs.values())
        if total <= 0:
            coeffs[1] += 1 - total
            total = sum(coeffs.values())
        return or_combination(ground, coeffs, total + int(rng.integers(0, total // 2 + 1)))
    raise ValueError(f"unknown family {family!r}")


def gen_adk_function(ground: GroundSet, k, family: str, rng: np.random.Generator, *,
                     strict: bool = False, max_draws: int = REJECTION_BUDGET) -> SetFunction:
    """Random threshold function (monotone, 0 at ∅, values in [0,1]) that passes AD-k.

    With ``strict`` the function must also fail AD-(k+1), which needs more
    than k elements. Every draw is checked; draws failing the check are
    discarded, and running out of draws raises GenerationBudgetExhausted.
    """
    if ground.size > MAX_EXACT_NODES:
        raise ValueError(f"ground set larger than {MAX_EXACT_NODES}")
    d = ground.size
    kk = resolve_k(k, max(d, 1))
    if strict and (k == INF or d <= kk):
        raise ValueError(f"cannot separate AD-{format_k(k)} from AD-(k+1) on {d} elements")
    for _ in range(max_draws):
        f = _draw(ground, kk, family, rng)
        if f.values[0] != 0 or any(not 0 <= v <= 1 for v in f.values):
            continue
        if d and not is_adk(f, kk).holds:
            continue
        if strict and is_adk(f, kk + 1).holds:
            continue
        return f
    raise GenerationBudgetExhausted(
        f"no {family} AD-{format_k(k)} function on {d} elements within {max_draws} draws"
    )


# -- graphs and instances ----------------------------------------------------

def node_labels(n: int) -> tuple[str, ...]:
    return tuple("abcdefghijklmnopqrstuvwxyz"[i] if n <= 26 else f"n{i}" for i in range(n))


def _cap_indegree(in_masks: list[int], cap: int, rng: np.random.Generator) -> list[int]:
    out = []
    for m in in_masks:
        nbrs = bits(m)
        if len(nbrs) > cap:
            nbrs = sorted(rng.choice(nbrs, size=cap, replace=False).tolist())
        out.append(sum(1 << u for u in nbrs))
    return out


def random_graph(cfg: GenConfig, rng: np.random.Generator) -> tuple[DirectedGraph, LayerAssignment | None]:
    n = cfg.n
    p = float(cfg.edge_density)
    labels = node_labels(n)
    masks = [0] * n
    layers = None
    if cfg.graph_kind == "layered":
        m = int(rng.integers(2, min(cfg.max_layers, n) + 1))
        # every layer nonempty
        assign = list(range(1, m + 1)) + [int(rng.integers(1, m + 1)) for _ in range(n - m)]
        rng.shuffle(assign)
        layers = LayerAssignment(tuple(assign), m)
        for v in range(n):
            for u in range(n):
                if assign[u] == assign[v] + 1 and rng.random() < p:
                    masks[v] |= 1 << u
    elif cfg.graph_kind == "dag":
        order = rng.permutation(n).tolist()
        for a in range(n):
            for b in range(a + 1, n):
                if rng.random() < p:
                    masks[order[b]] |= 1 << order[a]
    else:
        for v in range(n):
            for u in range(n):
                if u != v and rng.random() < p:
                    masks[v] |= 1 << u
    masks = _cap_indegree(masks, cfg.max_indegree, rng)
    return DirectedGraph(labels, tuple(masks)), layers


def random_gt_instance(cfg: GenConfig, rng: np.random.Generator) -> tuple[GTInstance, LayerAssignment | None]:
    graph, layers = random_graph(cfg, rng)
    thresholds = []
    for v in range(graph.n):
        ground = graph.in_ground(v)
        strict = cfg.strict and cfg.k != INF and ground.size > cfg.k
        thresholds.append(gen_adk_function(ground, cfg.k, cfg.function_family, rng, strict=strict))
    return GTInstance(graph, tuple(thresholds)), layers


def random_triggering_instance(cfg: GenConfig, rng: np.random.Generator) -> TriggeringInstance:
    graph, _ = random_graph(cfg, rng)
    dists = []
    for v in range(graph.n):
        d = len(graph.in_neighbors(v))
        w = rng.integers(0, 5, size=1 << d)
        if not w.any():
            w[0] = 1
        total = int(w.sum())
        dists.append(SetFunction(graph.in_ground(v), tuple(Fraction(int(x), total) for x in w)))
    return TriggeringInstance(graph, tuple(dists))


def replay_instance(cfg: GenConfig, index: int) -> GTInstance:
    return random_gt_instance(cfg, instance_rng(cfg.rng_seed, index))[0]


# -- global checks -----------------------------------------------------------

@dataclass(frozen=True)
class GlobalCheck:
    k: int
    sigma: SetFunction
    per_node: tuple[SetFunction, ...]
    sigma_report: ADkReport
    node_reports: tuple[ADkReport, ...]

    @property
    def holds(self) -> bool:
        return self.sigma_report.holds and all(r.holds for r in self.node_reports)

    def first_violation(self) -> tuple[str, ADkReport] | None:
        if not self.sigma_report.holds:
            return "sigma", self.sigma_report
        for label, rep in zip(self.sigma.ground.labels, self.node_reports):
            if not rep.holds:
                return label, rep
        return None


def _tables_to_functions(graph: DirectedGraph, table) -> tuple[SetFunction, tuple[SetFunction, ...]]:
    ground = GroundSet(graph.labels)
    sigma = SetFunction(ground, tuple(sum(row, Fraction(0)) for row in table))
    per = tuple(SetFunction(ground, tuple(row[v] for row in table)) for v in range(graph.n))
    return sigma, per


def global_adk_check(inst: GTInstance, k, *, method: str = "closure", budget: int | None = None) -> GlobalCheck:
    """Tabulate σ and every P_v over all seed sets and AD-k check each."""
    if inst.n > MAX_EXACT_NODES:
        raise ValueError(f"exact global checks are limited to {MAX_EXACT_NODES} nodes")
    table = spread_table(inst, method=method, budget=budget)
    sigma, per = _tables_to_functions(inst.graph, table)
    kk = resolve_k(k, inst.n)
    return GlobalCheck(kk, sigma, per, is_adk(sigma, kk), tuple(is_adk(p, kk) for p in per))


def permute_instance(inst: GTInstance, perm: list[int]) -> GTInstance:
    """Same instance with node v renumbered perm[v]."""
    g = inst.graph
    n = g.n
    labels = [""] * n
    masks = [0] * n
    for v in range(n):
        labels[perm[v]] = g.labels[v]
        masks[perm[v]] = sum(1 << perm[u] for u in g.in_neighbors(v))
    g2 = DirectedGraph(tuple(labels), tuple(masks))
    thresholds = [None] * n
    for v in range(n):
        new = perm[v]
        new_nbrs = g2.in_neighbors(new)
        old_nbrs = g.in_neighbors(v)
        pos = [old_nbrs.index(next(u for u in old_nbrs if perm[u] == w)) for w in new_nbrs]
        f = inst.thresholds[v]
        vals = [f.values[sum(1 << pos[j] for j in bits(loc))] for loc in range(1 << len(pos))]
        thresholds[new] = SetFunction(g2.in_ground(new), tuple(vals))
    return GTInstance(g2, tuple(thresholds))


def recheck_violation(inst: GTInstance, target: str, witness: tuple[int, int, Fraction], k: int,
                      rng: np.random.Generator, budget: int | None = None) -> dict:
    """Recompute the violating difference with independent oracles.

    The function is rebuilt from a randomly renumbered copy of the instance
    (closure oracle) and, when affordable, from breakpoint enumeration; the
    difference at the witness is recomputed from its definition each time.
    """
    S, A, _ = witness
    n = inst.n
    perm = rng.permutation(n).tolist()
    permuted = permute_instance(inst, perm)
    sign = 1 if A.bit_count() % 2 else -1

    def remap(mask: int) -> int:
        return sum(1 << perm[v] for v in bits(mask))

    def value_from(table, mapper) -> Fraction:
        if target == "sigma":
            f = SetFunction(GroundSet.of_size(n), tuple(sum(table[mapper(T)], Fraction(0)) for T in range(1 << n)))
        else:
            v = inst.graph.index(target)
            col = perm[v] if mapper is remap else v
            f = SetFunction(GroundSet.of_size(n), tuple(table[mapper(T)][col] for T in range(1 << n)))
        return difference(f, A, S)

    out = {}
    out["permuted_closure"] = value_from(spread_table(permuted, method="closure"), remap)
    budget = budget or default_budget()
    if breakpoint_count(inst) <= budget:
        out["breakpoint"] = value_from(spread_table(inst, method="breakpoint", budget=budget), lambda T: T)
    out["confirmed"] = all(sign * val < 0 for key, val in out.items())
    return out


@dataclass
class ConjectureReport:
    config: GenConfig
    mode: str
    instances_checked: int = 0
    verdict: str = "all-pass"
    records: list[dict] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    counterexample: dict | None = None
    retracted: list[dict] = field(default_factory=list)

    @property
    def violations(self) -> list[dict]:
        return [r for r in self.records if not r["holds"]]

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "mode": self.mode,
            "instances_checked": self.instances_checked,
            "skipped": len(self.skipped),
            "violations": len(self.violations),
            "retracted": len(self.retracted),
            "verdict": self.verdict,
        }


def _check_one(cfg: GenConfig, index: int, budget: int | None) -> dict:
    rng = instance_rng(cfg.rng_seed, index)
    record = {"index": index, "stream": [cfg.rng_seed, index]}
    try:
        inst, _ = random_gt_instance(cfg, rng)
    except GenerationBudgetExhausted as exc:
        return {**record, "skipped": f"generation: {exc}"}
    record["edges"] = len(inst.graph.edges())
    record["instance_digest"] = digest(serialize_instance(inst))
    try:
        check = global_adk_check(inst, cfg.k, method="closure", budget=budget)
    except BudgetExceeded as exc:
        return {**record, "skipped": f"budget: {exc}"}
    record["holds"] = check.holds
    bad = check.first_violation()
    if bad is not None:
        target, rep = bad
        S, A, val = rep.witness
        record["violation"] = {
            "target": target,
            "S": list(inst.graph.labels_of(S)),
            "A": list(inst.graph.labels_of(A)),
            "difference": str(val),
        }
        recheck = recheck_violation(inst, target, rep.witness, check.k,
                                    np.random.default_rng([cfg.rng_seed & (2**63 - 1), index, 1]), budget)
        record["instance"] = serialize_instance(inst)
        record["recheck"] = {key: (str(v) if isinstance(v, Fraction) else v) for key, v in recheck.items()}
    return record


def run_campaign(cfg: GenConfig, instances: int, *, workers: int | None = None,
                 budget: int | None = None) -> ConjectureReport:
    """Generate ``instances`` instances from ``cfg`` and check each for global AD-k.

    Instance i is drawn from its own stream seeded by (rng_seed, i), so the
    report does not depend on ``workers``.
    """
    if workers is None:
        workers = int(os.environ.get("ADK_THREADS", "1"))
    report = ConjectureReport(cfg, cfg.mode)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_check_one, [cfg] * instances, range(instances), [budget] * instances))
    else:
        records = [_check_one(cfg, i, budget) for i in range(instances)]
    for rec in records:
        if "skipped" in rec:
            report.skipped.append(rec)
            continue
        report.instances_checked += 1
        report.records.append(rec)
        if rec["holds"]:
            continue
        if not rec["recheck"]["confirmed"]:
            report.retracted.append(rec)
            continue
        if rec["violation"]["target"] == "sigma":
            if report.counterexample is None:
                report.counterexample = rec
            report.verdict = "counterexample"
        elif report.verdict == "all-pass":
            report.verdict = "node-violation"
    return report


# -- AD-inf identities -------------------------------------------------------

@dataclass
class IdentityReport:
    failures: list[str] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def expect(self, cond: bool, message: str) -> None:
        self.checked += 1
        if not cond:
            self.failures.append(message)


def verify_identities(inst: GTInstance | TriggeringInstance, budget: int | None = None) -> IdentityReport:
    """Executable form of the AD-inf argument for every node u.

    With P_u from the threshold closure oracle and h(S) = 1 - P_u(V \\ S):
    (a) the Möbius transform of h equals R_u enumerated over live-edge
        graphs, and P_u(S) = Σ_{T∩S≠∅} R_u(T);
    (b) mobius(h)(S) = Δ_S h(∅) >= 0 and Δ_P h(S) >= 0 for disjoint P, S;
    (c) Δ_S P_u(P) = (-1)^{|S|+1} Δ_S h(V \\ (P ∪ S)) for disjoint S, P.
    """
    if isinstance(inst, TriggeringInstance):
        tr, gt = inst, triggering_to_gt(inst)
    else:
        gt, tr = inst, gt_to_triggering(inst)
    g = gt.graph
    n = g.n
    ground = GroundSet(g.labels)
    full = ground.full
    table = spread_table(gt, method="closure", budget=budget)
    rep = IdentityReport()
    for u in range(n):
        name = g.labels[u]
        P = SetFunction(ground, tuple(table[S][u] for S in range(1 << n)))
        h = SetFunction(ground, tuple(1 - P.values[full & ~S] for S in range(1 << n)))
        R_formula = mobius(h)
        R_enum = reach_distribution(tr, u, budget)
        rep.expect(R_formula == R_enum, f"{name}: Möbius formula for R_u differs from live-edge enumeration")
        rep.expect(sum(R_enum.values, Fraction(0)) == 1, f"{name}: R_u does not sum to 1")
        rep.expect(all(r >= 0 for r in R_enum.values), f"{name}: R_u has a negative entry")
        for S in range(1 << n):
            hit = sum((R_enum.values[T] for T in range(1 << n) if T & S), Fraction(0))
            rep.expect(hit == P.values[S], f"{name}: P_u({g.labels_of(S)}) != Σ R_u over hitting sets")
        for S in range(1 << n):
            d0 = difference(h, S, 0)
            rep.expect(R_formula.values[S] == d0, f"{name}: mobius(h) != Δ_S h(∅) at {g.labels_of(S)}")
            rep.expect(d0 >= 0, f"{name}: Δ_S h(∅) < 0 at {g.labels_of(S)}")
        for S in range(1 << n):
            for Pm in submasks(full & ~S):
                rep.expect(difference(h, Pm, S) >= 0,
                           f"{name}: Δ_P h(S) < 0 at P={g.labels_of(Pm)}, S={g.labels_of(S)}")
                if S:
                    lhs = difference(P, S, Pm)
                    rhs = (1 if S.bit_count() % 2 else -1) * difference(h, S, full & ~(Pm | S))
                    rep.expect(lhs == rhs, f"{name}: sign identity fails at S={g.labels_of(S)}, P={g.labels_of(Pm)}")
    return rep
