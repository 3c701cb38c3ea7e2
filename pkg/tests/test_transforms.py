from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adk.conjecture import GenConfig, instance_rng, random_gt_instance, random_triggering_instance
from adk.diffusion import DirectedGraph, GTInstance, LayerAssignment, TriggeringInstance, exact_spread
from adk.setfn import INF, SetFunction, is_adk, mobius
from adk.transforms import (
    NodeMap,
    NotADAG,
    NotADInfinity,
    dag_layering,
    dag_to_layered,
    gt_to_triggering,
    lift_layered,
    triggering_to_gt,
    verify_transform,
)

from conftest import seeds
from test_diffusion import gt_from

FIFTH = Fraction(1, 5)
HALF = Fraction(1, 2)


def triggering_instance(labels, edges, dists) -> TriggeringInstance:
    g = DirectedGraph.from_edges(labels, edges)
    out = []
    for v in range(g.n):
        vals = dists.get(g.labels[v])
        if vals is None:
            vals = [0] * (1 << len(g.in_neighbors(v)))
            vals[0] = 1
        out.append(SetFunction(g.in_ground(v), tuple(vals)))
    return TriggeringInstance(g, tuple(out))


def independent_inclusion(d: int, p: Fraction) -> tuple[Fraction, ...]:
    return tuple(p ** A.bit_count() * (1 - p) ** (d - A.bit_count()) for A in range(1 << d))


# -- triggering <-> threshold ----------------------------------------------------------

def test_deterministic_full_triggering_is_or():
    tr = triggering_instance("abv", [("a", "v"), ("b", "v")], {"v": (0, 0, 0, 1)})
    gt = triggering_to_gt(tr)
    assert gt.thresholds[2].values == (0, 1, 1, 1)
    assert gt_to_triggering(gt).dists[2].values == (0, 0, 0, 1)


def test_independent_inclusion_round_trip():
    p = Fraction(1, 3)
    tr = triggering_instance("abcv", [("a", "v"), ("b", "v"), ("c", "v")], {"v": independent_inclusion(3, p)})
    f = triggering_to_gt(tr).thresholds[3]
    assert all(f.values[C] == 1 - (1 - p) ** C.bit_count() for C in range(8))
    assert gt_to_triggering(GTInstance(tr.graph, triggering_to_gt(tr).thresholds)).dists == tr.dists


def test_empty_triggering_set_gives_zero_threshold():
    tr = triggering_instance("uv", [("u", "v")], {"v": (1, 0)})
    assert triggering_to_gt(tr).thresholds[1].values == (0, 0)


def test_non_ad_inf_threshold_is_rejected_with_witness():
    gt = gt_from(["v", "a", "b"], [("a", "v"), ("b", "v")], {"v": (0, FIFTH, FIFTH, Fraction(3, 5))})
    with pytest.raises(NotADInfinity) as info:
        gt_to_triggering(gt)
    assert info.value.label == "v"
    assert info.value.subset == ("a", "b")
    assert info.value.value == -FIFTH


@given(seeds)
def test_random_round_trips_and_spread(seed):
    rng = np.random.default_rng(seed)
    cfg = GenConfig("general", int(rng.integers(1, 5)), Fraction(1, 2), INF, "coverage", seed)
    gt, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    tr = gt_to_triggering(gt)
    assert triggering_to_gt(tr).thresholds == gt.thresholds
    tr2 = random_triggering_instance(cfg, instance_rng(seed, 1))
    assert gt_to_triggering(triggering_to_gt(tr2)).dists == tr2.dists
    for q in tr.dists:
        assert all(x >= 0 for x in q.values) and sum(q.values) == 1


# -- DAG layering ------------------------------------------------------------------------

def test_four_node_dag_sources_at_bottom():
    g = DirectedGraph.from_edges(["1", "2", "3", "4"], [("3", "2"), ("4", "2"), ("2", "1"), ("3", "1")])
    layers = dag_layering(g)
    assert layers.bottom == g.mask(["3", "4"])
    assert layers.layer[g.index("1")] == 1


def test_edgeless_graph_has_one_layer():
    layers = dag_layering(DirectedGraph(("a", "b", "c"), (0, 0, 0)))
    assert layers.m == 1 and set(layers.layer) == {1}


def test_two_cycle_is_rejected():
    g = DirectedGraph.from_edges("abc", [("a", "b"), ("b", "a"), ("b", "c")])
    with pytest.raises(NotADAG) as info:
        dag_layering(g)
    assert set(info.value.cycle) == {"a", "b"}


def test_layered_input_needs_no_dummies():
    gt = gt_from(["v", "a", "b"], [("a", "v"), ("b", "v")], {"v": (0, FIFTH, FIFTH, Fraction(3, 5))})
    image, layers, nmap = dag_to_layered(gt)
    assert image == gt
    assert nmap == NodeMap.identity(3)


def test_single_skip_edge_gets_one_dummy():
    gt = gt_from(["t", "m", "s"], [("s", "m"), ("m", "t"), ("s", "t")])
    image, layers, nmap = dag_to_layered(gt)
    assert image.n == 4
    assert len(image.graph.edges()) == len(gt.graph.edges()) + 1
    assert layers.is_layered(image.graph)
    assert verify_transform(gt, image, nmap).ok


@given(seeds, st.sampled_from([1, 2, 3, INF]))
def test_layerize_random_dags(seed, k):
    rng = np.random.default_rng(seed)
    family = "triggering-derived" if k == INF else "rejection-sampled"
    cfg = GenConfig("dag", int(rng.integers(1, 6)), Fraction(int(rng.integers(3, 9)), 10), k, family, seed)
    gt, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    image, layers, nmap = dag_to_layered(gt)
    assert layers.is_layered(image.graph)
    assert verify_transform(gt, image, nmap, k=k).ok


# -- lift ---------------------------------------------------------------------------------

def two_layer_instance():
    return gt_from(["v", "w", "a", "b"], [("a", "v"), ("b", "v"), ("b", "w")],
                   {"v": (0, FIFTH, FIFTH, Fraction(3, 5)), "w": (0, Fraction(2, 3))})


def test_lift_layer_sizes_two_layers():
    gt = two_layer_instance()
    layers = LayerAssignment((1, 1, 2, 2), 2)
    image, img_layers, nmap = lift_layered(gt, layers)
    assert bin(img_layers.nodes_in(1)).count("1") == 2
    assert bin(img_layers.nodes_in(2)).count("1") == 4
    assert img_layers.is_layered(image.graph)
    assert nmap.seed_image(gt.graph.full) & ~img_layers.bottom == 0
    assert verify_transform(gt, image, nmap, k=1).ok


def test_off_diagonal_copy_stays_off_without_its_under_copy():
    gt = gt_from(["v", "u", "s"], [("u", "v"), ("s", "u")], {"v": (0, HALF), "u": (0, 1)})
    layers = LayerAssignment((1, 2, 3), 3)
    image, _, nmap = lift_layered(gt, layers)
    g2 = image.graph
    copy = g2.index("v@2.1")  # copy of a top-layer node in the middle layer
    under = g2.in_neighbors(copy).index(g2.index("v@3.1"))
    f = image.thresholds[copy]
    for loc in range(1 << f.n):
        assert f.values[loc] == (1 if loc >> under & 1 else 0)
    assert verify_transform(gt, image, nmap).ok


@given(seeds, st.sampled_from([1, 2, 3, INF]))
def test_lift_random_layered(seed, k):
    rng = np.random.default_rng(seed)
    family = "triggering-derived" if k == INF else "rejection-sampled"
    cfg = GenConfig("layered", int(rng.integers(2, 6)), Fraction(int(rng.integers(3, 9)), 10), k, family, seed)
    gt, layers = random_gt_instance(cfg, instance_rng(seed, 0))
    image, img_layers, nmap = lift_layered(gt, layers)
    assert img_layers.is_layered(image.graph)
    assert verify_transform(gt, image, nmap, k=k).ok
    for S in range(1 << gt.n):
        assert nmap.seed_image(S) & ~img_layers.bottom == 0


def test_lift_rejects_bad_layering():
    gt = two_layer_instance()
    with pytest.raises(ValueError):
        lift_layered(gt, LayerAssignment((1, 1, 1, 2), 2))
    with pytest.raises(ValueError):
        lift_layered(gt_from(["a"], []), LayerAssignment((1,), 1))


# -- verification ---------------------------------------------------------------------------

def test_identity_transform_has_zero_differences():
    gt = two_layer_instance()
    rep = verify_transform(gt, gt, NodeMap.identity(gt.n))
    assert rep.ok and all(r.difference == 0 for r in rep.rows)


def test_corrupted_image_is_flagged():
    gt = two_layer_instance()
    layers = LayerAssignment((1, 1, 2, 2), 2)
    image, _, nmap = lift_layered(gt, layers)
    x = image.graph.index("w@1.1")
    f = image.thresholds[x]
    bumped = tuple(min(Fraction(1), v + Fraction(1, 7)) if m else v for m, v in enumerate(f.values))
    broken = GTInstance(image.graph, image.thresholds[:x] + (SetFunction(f.ground, bumped),) + image.thresholds[x + 1:])
    rep = verify_transform(gt, broken, nmap)
    assert not rep.ok
    assert any(r.difference != 0 for r in rep.rows)


def test_triggering_coefficients_are_mobius_of_complement():
    gt = gt_from(["v", "a", "b"], [("a", "v"), ("b", "v")], {"v": (0, HALF, HALF, Fraction(3, 4))})
    f = gt.thresholds[0]
    h = SetFunction(f.ground, tuple(1 - f.values[3 & ~B] for B in range(4)))
    assert gt_to_triggering(gt).dists[0] == mobius(h)
    assert is_adk(f, INF).holds
    assert exact_spread(gt, 0b110).value == 2 + Fraction(3, 4)

