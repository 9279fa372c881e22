import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fnndse.design_space import (
    PRODUCT, SUM, AtMaximum, DesignSpace, DesignSpaceError, MergeGroup, ParameterSpec, decrement,
    group_values, increment, preference_boundary, smallest_point, space_size, table1_space,
)


def small_space(sizes):
    params = [ParameterSpec(f"p{i}", tuple(range(1, n + 1))) for i, n in enumerate(sizes)]
    return DesignSpace(tuple(params))


spaces = st.lists(st.integers(1, 5), min_size=1, max_size=4).map(small_space)


def test_table1_size():
    assert space_size(table1_space()) == 3_000_000


def test_size_trivial_cases():
    assert space_size(small_space([1])) == 1
    assert space_size(small_space([3, 4])) == 12


def test_table1_smallest_point_values():
    sp = table1_space()
    p = smallest_point(sp)
    assert p == (0,) * 11
    assert sp.values(p).tolist() == [16, 2, 128, 2, 2, 1, 32, 1, 1, 1, 2]
    assert smallest_point(small_space([4])) == (0,)


def test_increment_decode():
    sp = table1_space()
    d = sp.index_of("decode")
    p = increment(sp, smallest_point(sp), d)
    assert sp.values(p)[d] == 2
    assert [i for i, v in enumerate(p) if v] == [d]


def test_increment_at_max_raises():
    sp = small_space([2])
    with pytest.raises(AtMaximum):
        increment(sp, (1,), 0)


def test_group_values_bounds_and_l1_example():
    sp = table1_space()
    assert group_values(sp, smallest_point(sp))[0] == 0.0
    top = tuple(len(p.values) - 1 for p in sp.params)
    assert np.all(group_values(sp, top) == 1.0)
    p = sp.point_from_values({**{n: sp.params[i].values[0] for i, n in enumerate(sp.names)},
                              "l1_set": 32, "l1_way": 4})
    # (32*4 - 16*2) / (64*16 - 16*2) = 96 / 992
    assert group_values(sp, p)[0] == pytest.approx(96 / 992, abs=1e-12)


def test_table1_groups():
    sp = table1_space()
    assert [g.name for g in sp.groups] == ["L1", "L2", "MSHR", "decode", "ROB", "FU", "IQ"]
    fu = sp.groups[sp.group_index("FU")]
    assert fu.combine == SUM and len(fu.members) == 3
    assert sp.groups[0].combine == PRODUCT
    assert sp.group_range(sp.group_index("FU")) == (3.0, 9.0)


def test_parameter_validation():
    with pytest.raises(DesignSpaceError):
        ParameterSpec("x", (2, 1))
    with pytest.raises(DesignSpaceError):
        ParameterSpec("x", ())
    with pytest.raises(DesignSpaceError):
        ParameterSpec("x", (0, 1))
    with pytest.raises(DesignSpaceError):
        ParameterSpec("x", (1, math.inf))


def test_group_validation():
    params = (ParameterSpec("a", (1, 2)), ParameterSpec("b", (1, 2)))
    with pytest.raises(DesignSpaceError):
        DesignSpace(params, (MergeGroup("g", (0,)),))
    with pytest.raises(DesignSpaceError):
        DesignSpace(params, (MergeGroup("g", (0, 1), SUM), MergeGroup("h", (1,))))
    with pytest.raises(DesignSpaceError):
        MergeGroup("g", (0, 1))
    with pytest.raises(DesignSpaceError):
        DesignSpace((ParameterSpec("a", (1,)), ParameterSpec("a", (2,))))


def test_point_from_values_lists_legal_candidates():
    sp = table1_space()
    vals = {n: sp.params[i].values[0] for i, n in enumerate(sp.names)}
    vals["rob"] = 33
    with pytest.raises(DesignSpaceError, match="legal: 32, 64, 96, 128, 160"):
        sp.point_from_values(vals)


def test_validate_point():
    sp = small_space([2, 3])
    assert sp.validate_point([1, 2]) == (1, 2)
    with pytest.raises(DesignSpaceError):
        sp.validate_point([2, 0])
    with pytest.raises(DesignSpaceError):
        sp.validate_point([0])


def test_preference_boundary_midpoint():
    sp = table1_space()
    # decode values 1..5 normalize to (v - 1) / 4; midpoint of 3 and 4 is 0.625
    assert preference_boundary(sp, "decode", 3, 4) == pytest.approx(0.625)


def test_dict_round_trip():
    sp = table1_space()
    assert DesignSpace.from_dict(sp.to_dict()) == sp


@given(spaces)
def test_size_matches_enumeration(sp):
    assert space_size(sp) == sum(1 for _ in sp.enumerate())


@given(spaces, st.data())
def test_increment_then_revert(sp, data):
    p = tuple(data.draw(st.integers(0, len(q.values) - 1)) for q in sp.params)
    j = data.draw(st.integers(0, sp.n_params - 1))
    if sp.at_max(p, j):
        with pytest.raises(AtMaximum):
            increment(sp, p, j)
    else:
        q = increment(sp, p, j)
        assert decrement(sp, q, j) == p
        assert all(a == b for k, (a, b) in enumerate(zip(p, q)) if k != j)


@given(spaces)
def test_group_values_in_unit_interval(sp):
    for p in sp.enumerate():
        g = group_values(sp, p)
        assert np.all(g >= 0.0) and np.all(g <= 1.0)
