"""The acceptance battery: ten exact checks over random instances.

Each ``criterion_N`` returns a :class:`CriterionResult`. ``quick=True``
shrinks the sample counts for smoke runs; the full sizes are the defaults.
Every random choice comes from a generator seeded by (BATTERY_SEED, N), so
results are reproducible.
"""
from __future__ import annotations

import io
import itertools
import json
import time
from contextlib import redirect_stdout
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .conjecture import (
    GenConfig,
    gen_adk_function,
    instance_rng,
    random_gt_instance,
    random_triggering_instance,
    replay_instance,
    run_campaign,
    verify_identities,
)
from .diffusion import (
    exact_spread,
    layered_activation,
    live_edge_spread,
    monte_carlo_spread,
)
from .fileformat import digest, serialize_instance
from .setfn import (
    INF,
    GroundSet,
    SetFunction,
    bits,
    compound,
    compound_eval_continuous,
    difference,
    is_adk,
    iterated_difference,
    mobius,
    multilinear_eval,
    multilinear_partial,
    partition_derivative,
    submasks,
)
from .transforms import (
    NotADInfinity,
    dag_to_layered,
    gt_to_triggering,
    lift_layered,
    triggering_coefficients,
    triggering_to_gt,
    verify_transform,
)

BATTERY_SEED = 20240917
FD_TOL = 1e-6


@dataclass
class CriterionResult:
    number: int
    title: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    time_limit: float | None = None

    @property
    def passed(self) -> bool:
        in_time = self.time_limit is None or self.seconds < self.time_limit
        return not self.failures and self.checked > 0 and in_time

    def fail(self, message: str) -> None:
        if len(self.failures) < 20:
            self.failures.append(message)
        else:
            self.detail["more_failures"] = self.detail.get("more_failures", 0) + 1

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "" if self.time_limit is None else f", limit {self.time_limit:.0f}s"
        msg = f"[{status}] criterion {self.number}: {self.title} ({self.checked} checks, {self.seconds:.1f}s{extra})"
        if self.failures:
            msg += " first failure: " + self.failures[0]
        return msg

    def record(self) -> dict:
        """Deterministic summary (no timings)."""
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "checked": self.checked, "failures": self.failures, "detail": self.detail}


def _rng(number: int) -> np.random.Generator:
    return np.random.default_rng([BATTERY_SEED, number])


def _scaled(count: int, quick: bool, floor: int = 3) -> int:
    return max(floor, count // 10) if quick else count


def random_table(rng: np.random.Generator, n: int) -> SetFunction:
    den = int(rng.integers(1, 12))
    return SetFunction(GroundSet.of_size(n), tuple(Fraction(int(v), den) for v in rng.integers(-6, 7, size=1 << n)))


def random_point(rng: np.random.Generator, n: int, lo: int = 1, hi: int = 96, den: int = 97) -> list[Fraction]:
    return [Fraction(int(rng.integers(lo, hi + 1)), den) for _ in range(n)]


def _disjoint_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    labels = rng.integers(0, 3, size=n)  # 0: neither, 1: in A, 2: in S
    A = sum(1 << i for i in range(n) if labels[i] == 1)
    S = sum(1 << i for i in range(n) if labels[i] == 2)
    return A, S


def _sign(A: int) -> int:
    return 1 if A.bit_count() % 2 else -1


def _random_k(rng: np.random.Generator, choices=(1, 2, 3, INF)):
    return choices[int(rng.integers(0, len(choices)))]


def _random_adk(rng: np.random.Generator, ground: GroundSet, k) -> SetFunction:
    if k == INF:
        family = ("triggering-derived", "coverage")[int(rng.integers(0, 2))]
    else:
        family = ("rejection-sampled", "rejection-sampled", "coverage")[int(rng.integers(0, 3))]
    strict = family == "rejection-sampled" and k != INF and ground.size > k and rng.random() < 0.5
    return gen_adk_function(ground, k, family, rng, strict=strict)


def _finite_difference(fn, x: list[Fraction], coords: list[int], h: Fraction) -> Fraction:
    """Central mixed difference of ``fn`` along distinct ``coords``, evaluated exactly."""
    total = Fraction(0)
    for signs in itertools.product((1, -1), repeat=len(coords)):
        y = list(x)
        for c, s in zip(coords, signs):
            y[c] += s * h
        total += (1 if signs.count(-1) % 2 == 0 else -1) * fn(y)
    return total / (2 * h) ** len(coords)


# -- 1 ----------------------------------------------------------------------

def criterion_1(quick: bool = False) -> CriterionResult:
    res = CriterionResult(1, "difference calculus identities", time_limit=10.0)
    rng = _rng(1)
    t0 = time.perf_counter()
    for _ in range(_scaled(1000, quick)):
        n = int(rng.integers(1, 7))
        f = random_table(rng, n)
        A, S = _disjoint_pair(rng, n)
        elems = bits(A)
        direct = difference(f, A, S)
        for _ in range(2):
            order = [elems[i] for i in rng.permutation(len(elems))]
            res.checked += 1
            if iterated_difference(f, order, S) != direct:
                res.fail(f"order dependence n={n} A={A} S={S}")
        # overlapping A and S
        B = A | (1 << int(rng.integers(0, n)))
        T = S | (B & -B)
        res.checked += 1
        if difference(f, B, T) != 0:
            res.fail(f"nonzero difference on overlap n={n} A={B} S={T}")
        m = mobius(f)
        for S2 in range(1 << n):
            res.checked += 1
            if m.values[S2] != difference(f, S2, 0):
                res.fail(f"mobius != Δ_S h(∅) n={n} S={S2}")
    res.seconds = time.perf_counter() - t0
    return res


# -- 2 ----------------------------------------------------------------------

def criterion_2(quick: bool = False) -> CriterionResult:
    res = CriterionResult(2, "multilinear partial signs and finite differences")
    rng = _rng(2)
    h = Fraction(1, 1024)
    t0 = time.perf_counter()
    fd_checks = 0
    for _ in range(_scaled(200, quick)):
        n = int(rng.integers(1, 6))
        k = _random_k(rng)
        f = _random_adk(rng, GroundSet.of_size(n), k)
        kk = n if k == INF else min(k, n)
        orders = [A for A in range(1, 1 << n) if A.bit_count() <= kk]
        for _ in range(20):
            x = random_point(rng, n, lo=2, hi=95)
            for A in orders:
                d = multilinear_partial(f, A, x)
                res.checked += 1
                if _sign(A) * d < 0:
                    res.fail(f"sign of ∂_{A} F wrong at n={n} k={k}: {d}")
            A = orders[int(rng.integers(0, len(orders)))]
            fd = _finite_difference(lambda y: multilinear_eval(f, y), x, bits(A), h)
            fd_checks += 1
            if abs(float(fd - multilinear_partial(f, A, x))) > FD_TOL:
                res.fail(f"finite difference mismatch n={n} A={A}")
    res.detail["finite_difference_checks"] = fd_checks
    res.seconds = time.perf_counter() - t0
    return res


# -- 3 ----------------------------------------------------------------------

def _random_compound_tuple(rng: np.random.Generator, k: int):
    V = GroundSet.of_size(int(rng.integers(1, 5)))
    U = GroundSet.of_size(int(rng.integers(1, 5)))
    f = _random_adk(rng, V, k)
    g = [_random_adk(rng, U, k) for _ in range(V.size)]
    return f, g, U


def criterion_3(quick: bool = False) -> CriterionResult:
    res = CriterionResult(3, "compound functions keep AD-k; partition sum matches mixed partials")
    rng = _rng(3)
    t0 = time.perf_counter()
    for _ in range(_scaled(500, quick)):
        k = int(rng.integers(1, 5))
        f, g, _ = _random_compound_tuple(rng, k)
        rep = is_adk(compound(f, g), k)
        res.checked += 1
        if not rep.holds:
            res.fail(f"compound fails AD-{k}: witness {rep.witness}")
    h = Fraction(1, 2**16)
    for _ in range(_scaled(100, quick)):
        k = int(rng.integers(1, 5))
        f, g, U = _random_compound_tuple(rng, k)
        size = int(rng.integers(1, min(3, U.size) + 1))
        L = sorted(int(c) for c in rng.choice(U.size, size=size, replace=False))
        x = random_point(rng, U.size, lo=12, hi=84)
        exact = partition_derivative(f, g, L, x)
        fd = _finite_difference(lambda y: compound_eval_continuous(f, g, y), x, L, h)
        res.checked += 1
        if abs(float(exact - fd)) > FD_TOL:
            res.fail(f"partition sum {float(exact)} vs finite difference {float(fd)} on L={L}")
    res.seconds = time.perf_counter() - t0
    return res


# -- 4 ----------------------------------------------------------------------

def _random_config(rng: np.random.Generator, kind: str, n: int, k=None, family=None, seed=None) -> GenConfig:
    if k is None:
        k = _random_k(rng)
    if family is None:
        family = ("triggering-derived", "coverage")[int(rng.integers(0, 2))] if k == INF else \
            ("rejection-sampled", "coverage", "truncated")[int(rng.integers(0, 3))]
    density = Fraction(int(rng.integers(3, 8)), 10)
    return GenConfig(kind, n, density, k, family, int(rng.integers(0, 2**62)) if seed is None else seed)


def criterion_4(quick: bool = False) -> CriterionResult:
    res = CriterionResult(4, "layer-by-layer recursion equals the exact oracle")
    rng = _rng(4)
    t0 = time.perf_counter()
    for i in range(_scaled(100, quick)):
        cfg = _random_config(rng, "layered", int(rng.integers(2, 9)))
        inst, layers = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        for S in submasks(layers.bottom):
            per = exact_spread(inst, S, method="breakpoint").per_node
            for v in range(inst.n):
                res.checked += 1
                got = layered_activation(inst, layers, S, v)
                if got != per[v]:
                    res.fail(f"instance {i}: P_{inst.graph.labels[v]}({S}) recursion {got} oracle {per[v]}")
    res.seconds = time.perf_counter() - t0
    return res


# -- 5 ----------------------------------------------------------------------

def criterion_5(quick: bool = False) -> CriterionResult:
    res = CriterionResult(5, "threshold/triggering equivalence")
    rng = _rng(5)
    t0 = time.perf_counter()
    for i in range(_scaled(100, quick)):
        cfg = _random_config(rng, "general", int(rng.integers(1, 7)), k=INF)
        gt, _ = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        try:
            tr = gt_to_triggering(gt)
        except NotADInfinity as exc:
            res.fail(f"instance {i}: AD-inf threshold rejected: {exc}")
            continue
        res.checked += 1
        if triggering_to_gt(tr).thresholds != gt.thresholds:
            res.fail(f"instance {i}: threshold round trip differs")
        res.checked += 1
        if gt_to_triggering(triggering_to_gt(tr)).dists != tr.dists:
            res.fail(f"instance {i}: distribution round trip differs")
        for S in range(1 << gt.n):
            res.checked += 1
            a = live_edge_spread(tr, S).value
            b = exact_spread(gt, S, method="breakpoint").value
            if a != b:
                res.fail(f"instance {i}: live-edge {a} vs threshold {b} at S={S}")
    negatives = 0
    for i in range(_scaled(50, quick)):
        n = int(rng.integers(3, 7))
        k = 1 if n == 3 else int(rng.integers(1, 3))
        cfg = _random_config(rng, "general", n, k=k, family="rejection-sampled")
        cfg = GenConfig(cfg.graph_kind, n, Fraction(1), k, "rejection-sampled", cfg.rng_seed, strict=True)
        gt, _ = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        res.checked += 1
        try:
            gt_to_triggering(gt)
        except NotADInfinity as exc:
            negatives += 1
            f = gt.thresholds[exc.node]
            q = triggering_coefficients(f)
            mask = f.ground.mask(exc.subset)
            if not (exc.value < 0 and q.values[mask] == exc.value):
                res.fail(f"negative {i}: witness {exc.subset} -> {exc.value} does not check out")
            if any(p < 0 for p in q.values[:mask]):
                res.fail(f"negative {i}: witness is not the first negative coefficient")
        else:
            res.fail(f"negative {i}: non-AD-inf instance accepted")
    res.detail["non_adinf_rejected"] = negatives
    res.seconds = time.perf_counter() - t0
    return res


# -- 6 ----------------------------------------------------------------------

def _check_image(res: CriterionResult, tag: str, inst, image, img_layers, nmap, k, bottom_seeds: bool) -> None:
    res.checked += 1
    if not img_layers.is_layered(image.graph):
        res.fail(f"{tag}: image is not layered")
    if bottom_seeds:
        res.checked += 1
        if nmap.seed_image(inst.graph.full) & ~img_layers.bottom:
            res.fail(f"{tag}: seeds not mapped to the bottom layer")
    rep = verify_transform(inst, image, nmap, k=k)
    res.checked += len(rep.rows) + len(rep.adk)
    for x, r in rep.adk:
        if not r.holds:
            res.fail(f"{tag}: image threshold of {image.graph.labels[x]} fails AD-{k}")
    for row in rep.rows:
        if row.difference:
            res.fail(f"{tag}: spread {row.original} vs image {row.image} at S={row.seeds}")


def criterion_6(quick: bool = False) -> CriterionResult:
    res = CriterionResult(6, "lift and layerize preserve layering, AD-k and spread")
    rng = _rng(6)
    t0 = time.perf_counter()
    for i in range(_scaled(100, quick)):
        cfg = _random_config(rng, "layered", int(rng.integers(2, 7)))
        inst, layers = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        image, img_layers, nmap = lift_layered(inst, layers)
        _check_image(res, f"lift {i}", inst, image, img_layers, nmap, cfg.k, True)
    for i in range(_scaled(100, quick)):
        cfg = _random_config(rng, "dag", int(rng.integers(1, 7)))
        inst, _ = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        image, img_layers, nmap = dag_to_layered(inst)
        _check_image(res, f"layerize {i}", inst, image, img_layers, nmap, cfg.k, False)
    res.seconds = time.perf_counter() - t0
    return res


# -- 7 ----------------------------------------------------------------------

def regression_grid(quick: bool = False) -> list[tuple[str, GenConfig, int]]:
    count = _scaled(50, quick)
    grid = []
    seed = BATTERY_SEED
    for kind in ("layered", "dag"):
        for k in (1, 2, 3, 4):
            grid.append((f"{kind} k={k}", GenConfig(kind, 6, Fraction(1, 2), k, "rejection-sampled", seed, strict=True), count))
            seed += 1
    grid.append(("general k=inf", GenConfig("general", 6, Fraction(1, 2), INF, "triggering-derived", seed), count))
    grid.append(("general k=2 truncated", GenConfig("general", 6, Fraction(1, 2), 2, "truncated", seed + 1), count))
    return grid


def criterion_7(quick: bool = False) -> CriterionResult:
    res = CriterionResult(7, "proved cases: campaigns find no global violation", time_limit=600.0)
    t0 = time.perf_counter()
    for name, cfg, count in regression_grid(quick):
        rep = run_campaign(cfg, count)
        res.checked += rep.instances_checked
        res.detail[name] = rep.verdict
        if rep.skipped:
            res.fail(f"{name}: {len(rep.skipped)} instance(s) skipped: {rep.skipped[0]['skipped']}")
        if rep.verdict != "all-pass" or rep.retracted:
            v = (rep.violations or rep.retracted)[0]
            res.fail(f"{name}: {rep.verdict}, instance {v['index']}: {v['violation']}")
    res.seconds = time.perf_counter() - t0
    return res


# -- 8 ----------------------------------------------------------------------

def criterion_8(quick: bool = False) -> CriterionResult:
    res = CriterionResult(8, "AD-inf identity suite")
    rng = _rng(8)
    t0 = time.perf_counter()
    for i in range(_scaled(50, quick)):
        cfg = _random_config(rng, "general", int(rng.integers(1, 6)), k=INF)
        if i % 2:
            inst = random_triggering_instance(cfg, instance_rng(cfg.rng_seed, 0))
        else:
            inst, _ = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        rep = verify_identities(inst)
        res.checked += rep.checked
        for msg in rep.failures:
            res.fail(f"instance {i}: {msg}")
    res.seconds = time.perf_counter() - t0
    return res


# -- 9 ----------------------------------------------------------------------

def criterion_9(quick: bool = False) -> CriterionResult:
    res = CriterionResult(9, "Monte Carlo agrees with exact spread")
    rng = _rng(9)
    count = _scaled(100, quick, floor=10)
    trials = 10**4 if quick else 10**5
    within = 0
    t0 = time.perf_counter()
    for i in range(count):
        cfg = _random_config(rng, ("layered", "dag", "general")[i % 3], int(rng.integers(2, 7)))
        inst, _ = random_gt_instance(cfg, instance_rng(cfg.rng_seed, 0))
        S = int(rng.integers(1, 1 << inst.n))
        exact = exact_spread(inst, S, method="closure").value
        seed = int(rng.integers(0, 2**63))
        mc = monte_carlo_spread(inst, S, trials, seed)
        res.checked += 1
        if abs(mc.value - float(exact)) <= 4 * mc.stderr:
            within += 1
        if i % 10 == 0:
            again = monte_carlo_spread(inst, S, trials, seed)
            res.checked += 1
            if (again.value, again.per_node, again.stderr) != (mc.value, mc.per_node, mc.stderr):
                res.fail(f"instance {i}: rerun with the same seed differs")
    need = -(-95 * count // 100)
    res.detail["within_4_stderr"] = f"{within}/{count}"
    if within < need:
        res.fail(f"only {within} of {count} estimates within 4 stderr (need {need})")
    res.seconds = time.perf_counter() - t0
    return res


# -- 10 ---------------------------------------------------------------------

def criterion_10(quick: bool = False) -> CriterionResult:
    from .cli import main

    res = CriterionResult(10, "open-range search smoke test")
    argv = ["search", "--graph", "general", "--n", "6", "--k", "3", "--instances", "20", "--seed", str(BATTERY_SEED)]
    t0 = time.perf_counter()
    outputs = []
    for _ in range(2):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(argv)
        outputs.append((code, buf.getvalue()))
    code, text = outputs[0]
    res.checked += 1
    if code not in (0, 1):
        res.fail(f"search exited with {code}")
    res.checked += 1
    if outputs[0] != outputs[1]:
        res.fail("two runs produced different reports")
    lines = [json.loads(x) for x in text.splitlines()]
    summary = lines[-1]
    records = [x for x in lines if x.get("type") == "instance"]
    payload = summary.get("payload", {})
    res.checked += 1
    if summary.get("type") != "summary" or payload.get("instances_checked", 0) + payload.get("skipped", 0) != 20:
        res.fail("summary does not account for all 20 instances")
    cfg = GenConfig(**{**payload.get("config", {}), "edge_density": Fraction(payload["config"]["edge_density"])}) \
        if "config" in payload else None
    for rec in records:
        if "skipped" in rec:
            continue
        res.checked += 1
        replayed = replay_instance(cfg, rec["index"])
        if digest(serialize_instance(replayed)) != rec["instance_digest"]:
            res.fail(f"instance {rec['index']} does not replay from provenance")
        if not rec["holds"]:
            res.checked += 1
            if "recheck" not in rec:
                res.fail(f"instance {rec['index']}: violation reported without recomputation")
    res.detail["verdict"] = payload.get("verdict")
    res.detail["flagged"] = payload.get("violations", 0)
    res.seconds = time.perf_counter() - t0
    return res


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_battery(quick: bool = False, only=None) -> list[CriterionResult]:
    return [CRITERIA[i](quick) for i in sorted(only or CRITERIA)]


__all__ = ["CriterionResult", "CRITERIA", "run_battery", "regression_grid"]
