from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from splitcast.fabric import (
    ADD_DROP,
    FabricState,
    FanoutExceeded,
    SplitterUnavailable,
    UnknownBranch,
    WavelengthBusy,
    release_branch,
    reserve_branch,
    sad_geometry,
)
from splitcast.topology import NodeDescriptor

OXC = NodeDescriptor("X", 4)
MC2 = NodeDescriptor("M", 4, is_splitter=True, max_fanout=2)
MC4 = NodeDescriptor("M", 4, is_splitter=True, max_fanout=4)


def test_sad_geometry_figure_configuration():
    g = sad_geometry(3, 2)
    assert (g.splitters, g.gates, g.switching_elements, g.sad_planes, g.demultiplexers, g.multiplexers) == (
        3, 9, 9, 2, 3, 3)


def test_sad_geometry_small_cases():
    g = sad_geometry(1, 1)
    assert (g.splitters, g.gates, g.switching_elements) == (1, 1, 1)
    g = sad_geometry(4, 3)
    assert (g.gates, g.switching_elements, g.sad_planes) == (16, 16, 3)


@pytest.mark.parametrize("p, w", [(0, 1), (1, 0), (-2, 3)])
def test_sad_geometry_rejects_nonpositive(p, w):
    with pytest.raises(ValueError):
        sad_geometry(p, w)


def test_first_branch_on_plain_oxc():
    f = reserve_branch(FabricState("X"), OXC, 0, 0, 1)
    assert f.outputs(0, 0) == (1,) and f.fanout(0, 0) == 1
    assert f.power_factors(0, 0) == {1: Fraction(1)}


def test_second_branch_on_plain_oxc_is_refused():
    f = reserve_branch(FabricState("X"), OXC, 0, 0, 1)
    with pytest.raises(SplitterUnavailable):
        reserve_branch(f, OXC, 0, 0, 2)


def test_fanout_bound():
    f = FabricState("M")
    for out in (1, 2):
        f = reserve_branch(f, MC2, 0, 0, out)
    with pytest.raises(FanoutExceeded):
        reserve_branch(f, MC2, 0, 0, 3)


def test_wavelength_collision_on_output():
    f = reserve_branch(FabricState("M"), MC4, 0, 0, 2)
    with pytest.raises(WavelengthBusy):
        reserve_branch(f, MC4, 1, 0, 2)
    # Another wavelength on the same fiber is fine.
    assert reserve_branch(f, MC4, 1, 1, 2).outputs(1, 1) == (2,)


def test_electrical_duplication_bypasses_limits():
    f = reserve_branch(FabricState("X"), OXC, ADD_DROP, 0, 0)
    f = reserve_branch(f, OXC, ADD_DROP, 0, 1, electrical=True)
    assert (ADD_DROP, 0) in f.electrical
    assert f.power_factors(ADD_DROP, 0) == {0: Fraction(1), 1: Fraction(1)}


def test_port_range_checked():
    with pytest.raises(ValueError):
        reserve_branch(FabricState("X"), OXC, 0, 0, 4)
    with pytest.raises(ValueError):
        reserve_branch(FabricState("X"), OXC, 0, 5, 1, wavelengths=4)


def test_release_only_branch_removes_key():
    f = reserve_branch(FabricState("X"), OXC, 0, 0, 1)
    assert release_branch(f, 0, 0, 1).branches == {}


def test_release_one_of_two_restores_full_power():
    f = reserve_branch(FabricState("M"), MC4, 0, 0, 1)
    f = reserve_branch(f, MC4, 0, 0, 2)
    assert f.power_factors(0, 0) == {1: Fraction(1, 2), 2: Fraction(1, 2)}
    f = release_branch(f, 0, 0, 1)
    assert f.power_factors(0, 0) == {2: Fraction(1)}


def test_release_unknown_branch():
    with pytest.raises(UnknownBranch):
        release_branch(FabricState("X"), 0, 0, 1)


def test_round_trip_dict():
    f = reserve_branch(FabricState("M"), MC4, 0, 0, 1)
    f = reserve_branch(f, MC4, 0, 0, 3)
    assert FabricState.from_dict(f.to_dict()) == f


@given(st.lists(st.integers(0, 3), min_size=1, max_size=4, unique=True))
def test_split_powers_sum_to_input(outs):
    f = FabricState("M")
    for o in outs:
        f = reserve_branch(f, MC4, ADD_DROP, 0, o)
    factors = f.power_factors(ADD_DROP, 0)
    assert sum(factors.values()) == 1
    assert set(factors.values()) == {Fraction(1, len(outs))}


@given(st.lists(st.integers(0, 3), min_size=1, max_size=4, unique=True), st.data())
def test_reserve_release_inverse(outs, data):
    f = FabricState("M")
    for o in outs:
        f = reserve_branch(f, MC4, ADD_DROP, 0, o)
    for o in data.draw(st.permutations(outs)):
        f = release_branch(f, ADD_DROP, 0, o)
    assert f == FabricState("M")
