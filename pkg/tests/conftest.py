from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from adk.setfn import GroundSet, SetFunction

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

rationals = st.fractions(min_value=-3, max_value=3, max_denominator=12)
unit_rationals = st.fractions(min_value=0, max_value=1, max_denominator=16)


@st.composite
def set_functions(draw, min_n=0, max_n=5, values=rationals):
    n = draw(st.integers(min_n, max_n))
    table = draw(st.lists(values, min_size=1 << n, max_size=1 << n))
    return SetFunction(GroundSet.of_size(n), tuple(table))


@st.composite
def disjoint_pairs(draw, n):
    roles = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    A = sum(1 << i for i, r in enumerate(roles) if r == 1)
    S = sum(1 << i for i, r in enumerate(roles) if r == 2)
    return A, S


@st.composite
def points(draw, n, lo=Fraction(0), hi=Fraction(1)):
    return [draw(st.fractions(min_value=lo, max_value=hi, max_denominator=64)) for _ in range(n)]


seeds = st.integers(0, 2**32 - 1)


def rng_of(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
