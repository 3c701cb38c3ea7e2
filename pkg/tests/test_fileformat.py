from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adk.conjecture import GenConfig, instance_rng, random_gt_instance, random_triggering_instance
from adk.diffusion import GTInstance, TriggeringInstance
from adk.fileformat import ParseError, digest, parse_instance, parse_rational, serialize_instance

from conftest import seeds

NONSUB = """\
model gt
n 3
nodes v a b
edges
a -> v
b -> v
table v
{} = 0
{a} = 1/5
{b} = 1/5
{a,b} = 3/5
"""


def test_minimal_gt_file():
    inst = parse_instance("model gt\nn 1\nnodes v\nedges\n")
    assert isinstance(inst, GTInstance)
    assert inst.thresholds[0].values == (0,)


def test_nonsubmodular_file_parses_exactly():
    inst = parse_instance(NONSUB)
    assert inst.thresholds[0].values == (0, Fraction(1, 5), Fraction(1, 5), Fraction(3, 5))
    assert inst.graph.in_neighbors(0) == (1, 2)


def test_comments_and_blank_lines():
    text = "# header\n\n" + NONSUB.replace("edges\n", "edges   # list\n\n")
    assert parse_instance(text) == parse_instance(NONSUB)


def test_canonical_form_round_trips_bytes():
    inst = parse_instance(NONSUB)
    text = serialize_instance(inst)
    assert parse_instance(text) == inst
    assert serialize_instance(parse_instance(text)) == text
    assert digest(text) == digest(serialize_instance(inst))


def test_triggering_deficit_is_reported():
    text = "model triggering\nn 2\nnodes u v\nedges\nu -> v\ntable v\n{u} = 9/10\n"
    with pytest.raises(ParseError) as info:
        parse_instance(text)
    assert "v" in info.value.message and "1/10" in info.value.message
    assert info.value.line == 6


def test_triggering_omitted_subsets_are_zero():
    text = "model triggering\nn 2\nnodes u v\nedges\nu -> v\ntable v\n{u} = 1\n"
    inst = parse_instance(text)
    assert isinstance(inst, TriggeringInstance)
    assert inst.dists[1].values == (0, 1)
    assert inst.dists[0].values == (1,)


@pytest.mark.parametrize("text,line,fragment", [
    (NONSUB.replace("{a,b} = 3/5\n", ""), 7, "missing {a,b}"),
    (NONSUB.replace("{a} = 1/5", "{a} = 0.2"), 9, "invalid rational"),
    (NONSUB.replace("{a} = 1/5", "{a} = 1/0"), 9, "zero denominator"),
    (NONSUB.replace("{a} = 1/5", "{c} = 1/5"), 9, "not an in-neighbor"),
    (NONSUB.replace("b -> v", "c -> v"), 6, "unknown node"),
    (NONSUB.replace("a -> v", "a => v"), 5, "expected 'u -> v'"),
    (NONSUB.replace("n 3", "n 4"), 3, "declared n 4"),
    (NONSUB.replace("model gt", "model ic"), 1, "model must be"),
    (NONSUB.replace("{} = 0", "{} = 1/10"), 7, "must be 0"),
    (NONSUB.replace("{a,b} = 3/5", "{a,b} = 1/10"), 7, "monotone"),
    (NONSUB.replace("nodes v a b", "nodes v a,x b"), 3, "invalid node label"),
])
def test_errors_carry_positions(text, line, fragment):
    with pytest.raises(ParseError) as info:
        parse_instance(text)
    assert fragment in str(info.value)
    assert info.value.line == line and info.value.column >= 1


def test_rational_parsing():
    assert parse_rational("3/6") == Fraction(1, 2)
    assert parse_rational("-2") == -2
    for bad in ("1.5", "1/", "a/b", "1e3"):
        with pytest.raises(ParseError):
            parse_rational(bad)


@given(seeds, st.sampled_from(["layered", "dag", "general"]), st.booleans())
def test_random_instances_round_trip(seed, kind, triggering):
    rng = np.random.default_rng(seed)
    cfg = GenConfig(kind, int(rng.integers(2, 7)), Fraction(1, 2), 2, "rejection-sampled", seed)
    if triggering:
        inst = random_triggering_instance(cfg, instance_rng(seed, 0))
    else:
        inst, _ = random_gt_instance(cfg, instance_rng(seed, 0))
    text = serialize_instance(inst)
    back = parse_instance(text)
    assert back == inst
    assert serialize_instance(back) == text
