from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adk.conjecture import (
    GenConfig,
    GenerationBudgetExhausted,
    coverage_function,
    gen_adk_function,
    global_adk_check,
    instance_rng,
    permute_instance,
    random_gt_instance,
    random_triggering_instance,
    replay_instance,
    run_campaign,
    verify_identities,
)
from adk.diffusion import DirectedGraph, GTInstance, TriggeringInstance, spread_table
from adk.fileformat import digest, serialize_instance
from adk.setfn import INF, GroundSet, SetFunction, is_adk

from conftest import seeds
from test_diffusion import gt_from

FIFTH = Fraction(1, 5)


# -- generators ------------------------------------------------------------------------

@given(seeds, st.integers(0, 5))
def test_triggering_derived_functions_are_ad_inf(seed, d):
    f = gen_adk_function(GroundSet.of_size(d), INF, "triggering-derived", np.random.default_rng(seed))
    assert is_adk(f, INF).holds and f.values[0] == 0 and f.is_monotone()


@given(seeds, st.integers(1, 5), st.sampled_from([1, 2, 3, INF]),
       st.sampled_from(["rejection-sampled", "coverage", "truncated"]))
def test_generated_functions_are_certified(seed, d, k, family):
    if family == "truncated" and k not in (1, 2):
        k = 2
    f = gen_adk_function(GroundSet.of_size(d), k, family, np.random.default_rng(seed))
    assert is_adk(f, k).holds
    assert f.values[0] == 0 and all(0 <= v <= 1 for v in f.values) and f.is_monotone()


def test_single_full_cover_item_is_or():
    ground = GroundSet.of_size(3)
    assert coverage_function(ground, [(1, ground.full)]).values == (0,) + (1,) * 7


@given(seeds)
def test_strict_generation_separates_orders(seed):
    f = gen_adk_function(GroundSet.of_size(3), 1, "rejection-sampled", np.random.default_rng(seed), strict=True)
    assert is_adk(f, 1).holds
    rep = is_adk(f, 2)
    assert not rep.holds and rep.witness[1].bit_count() == 2


def test_strict_needs_room_and_budget_is_reported():
    with pytest.raises(ValueError):
        gen_adk_function(GroundSet.of_size(2), 2, "rejection-sampled", np.random.default_rng(0), strict=True)
    with pytest.raises(GenerationBudgetExhausted):
        gen_adk_function(GroundSet.of_size(3), 1, "coverage", np.random.default_rng(0), strict=True, max_draws=50)


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig("general", 9, Fraction(1, 2), 2, "coverage", 0)
    with pytest.raises(ValueError):
        GenConfig("general", 4, Fraction(3, 2), 2, "coverage", 0)
    with pytest.raises(ValueError):
        GenConfig("tree", 4, Fraction(1, 2), 2, "coverage", 0)
    assert GenConfig("general", 6, Fraction(1, 2), 3, "coverage", 0).mode == "search"
    assert GenConfig("general", 6, Fraction(1, 2), INF, "coverage", 0).mode == "regression"
    assert GenConfig("layered", 6, Fraction(1, 2), 3, "coverage", 0).mode == "regression"


@given(seeds, st.sampled_from(["layered", "dag", "general"]))
def test_random_graphs_have_requested_shape(seed, kind):
    cfg = GenConfig(kind, 6, Fraction(1, 2), 2, "coverage", seed, max_indegree=3)
    inst, layers = random_gt_instance(cfg, instance_rng(seed, 0))
    g = inst.graph
    assert all(len(g.in_neighbors(v)) <= 3 for v in range(g.n))
    if kind == "layered":
        assert layers.is_layered(g) and layers.m >= 2
        assert all(layers.nodes_in(i) for i in range(1, layers.m + 1))
    for f in inst.thresholds:
        assert is_adk(f, 2).holds


def test_same_stream_same_instance():
    cfg = GenConfig("general", 5, Fraction(1, 2), 2, "rejection-sampled", 99)
    assert replay_instance(cfg, 3) == replay_instance(cfg, 3)
    assert replay_instance(cfg, 3) != replay_instance(cfg, 4)


# -- global checks ---------------------------------------------------------------------

def test_single_node_spread_is_ad_inf():
    check = global_adk_check(gt_from(["v"], []), INF)
    assert check.holds and check.sigma.values == (0, 1)


def test_locally_ad1_instance_can_fail_globally():
    gt = gt_from(["v", "a", "b"], [("a", "v"), ("b", "v")], {"v": (0, FIFTH, FIFTH, Fraction(3, 5))})
    assert all(is_adk(f, 1).holds for f in gt.thresholds)
    check = global_adk_check(gt, 2)
    assert not check.holds
    target, rep = check.first_violation()
    assert target == "sigma"
    S, A, val = rep.witness
    assert A == gt.graph.mask(["a", "b"]) and val == FIFTH


@given(seeds)
def test_locally_ad_inf_is_globally_ad_inf(seed):
    cfg = GenConfig("general", int(np.random.default_rng(seed).integers(2, 6)), Fraction(1, 2), INF,
                    "triggering-derived", seed)
    inst, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    assert global_adk_check(inst, INF).holds


@given(seeds)
def test_permuting_nodes_permutes_spread(seed):
    cfg = GenConfig("general", 4, Fraction(1, 2), 2, "rejection-sampled", seed)
    inst, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    perm = [int(x) for x in np.random.default_rng(seed).permutation(4)]
    other = permute_instance(inst, perm)
    a, b = spread_table(inst), spread_table(other)
    for S in range(16):
        S2 = sum(1 << perm[v] for v in range(4) if S >> v & 1)
        assert all(a[S][v] == b[S2][perm[v]] for v in range(4))


# -- campaigns ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind,k,family", [
    ("layered", 2, "rejection-sampled"),
    ("dag", 3, "rejection-sampled"),
    ("general", INF, "triggering-derived"),
    ("general", 2, "truncated"),
])
def test_regression_campaigns_pass(kind, k, family):
    rep = run_campaign(GenConfig(kind, 5, Fraction(1, 2), k, family, 11), 15)
    assert rep.mode == "regression"
    assert rep.verdict == "all-pass" and rep.instances_checked == 15 and not rep.skipped


def test_search_report_structure_and_replay():
    cfg = GenConfig("general", 6, Fraction(1, 2), 3, "rejection-sampled", 5, strict=True)
    rep = run_campaign(cfg, 6)
    again = run_campaign(cfg, 6)
    assert rep.summary() == again.summary() and rep.records == again.records
    assert rep.mode == "search" and rep.verdict in ("all-pass", "counterexample", "node-violation")
    for rec in rep.records:
        assert rec["stream"] == [5, rec["index"]]
        assert digest(serialize_instance(replay_instance(cfg, rec["index"]))) == rec["instance_digest"]


def test_campaign_is_independent_of_workers():
    cfg = GenConfig("general", 5, Fraction(1, 2), 3, "rejection-sampled", 8)
    assert run_campaign(cfg, 4, workers=1).records == run_campaign(cfg, 4, workers=2).records


def test_campaign_flags_violations_when_checking_above_local_order():
    # Locally AD-1 (strict) thresholds checked for global AD-2 must trip the checker.
    cfg = GenConfig("general", 4, Fraction(1), 1, "rejection-sampled", 3, strict=True)
    rep = run_campaign(cfg, 10)
    checked_at_2 = [global_adk_check(replay_instance(cfg, i), 2) for i in range(10)]
    assert rep.verdict == "all-pass"
    assert any(not c.holds for c in checked_at_2)


def test_budget_failures_are_counted():
    cfg = GenConfig("general", 4, Fraction(1), 2, "coverage", 1)
    rep = run_campaign(cfg, 3, budget=1)
    assert rep.instances_checked == 0 and len(rep.skipped) == 3
    assert all(r["skipped"].startswith("budget") for r in rep.skipped)


# -- AD-inf identities ------------------------------------------------------------------

def test_identities_on_isolated_node():
    g = DirectedGraph(("u",), (0,))
    rep = verify_identities(TriggeringInstance(g, (SetFunction(g.in_ground(0), (1,)),)))
    assert rep.ok and rep.checked > 0


def test_identities_on_single_edge():
    p = Fraction(3, 8)
    g = DirectedGraph.from_edges(["u", "v"], [("u", "v")])
    tr = TriggeringInstance(g, (SetFunction(g.in_ground(0), (1,)), SetFunction(g.in_ground(1), (1 - p, p))))
    assert verify_identities(tr).ok
    # h(S) = 1 - P_v(V \ S) for S containing v
    table = spread_table(GTInstance(g, (SetFunction(g.in_ground(0), (0,)), SetFunction(g.in_ground(1), (0, p)))))
    assert {1 - table[3 & ~S][1] for S in (0b10, 0b11)} == {1 - p, 1}


@given(seeds, st.booleans())
def test_identities_on_random_instances(seed, as_triggering):
    cfg = GenConfig("general", int(np.random.default_rng(seed).integers(1, 5)), Fraction(1, 2), INF,
                    "triggering-derived", seed)
    if as_triggering:
        inst = random_triggering_instance(cfg, instance_rng(seed, 0))
    else:
        inst, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    rep = verify_identities(inst)
    assert rep.ok, rep.failures[:3]
