from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from splitcast.engine import Simulation
from splitcast.oracles import propagate_power
from splitcast.topology import explicit_topology, generate_topology
from splitcast.tree import BrokenChain, leaf_power

BINARY = [("A", "B"), ("B", "C"), ("B", "D"), ("D", "E"), ("D", "F")]


def build(links, source, members, splitters):
    nodes = sorted({n for link in links for n in link})
    t = explicit_topology(nodes, links, splitters=splitters)
    sim = Simulation(t, source)
    for m in members:
        assert sim.join(m).ok
    return t, sim


def test_straight_path_full_power():
    t, sim = build([("A", "B"), ("B", "C")], "A", ["C"], [])
    assert leaf_power(sim.tree(), sim.fabrics, "C", t) == 1


def test_one_split_halves():
    t, sim = build(BINARY[:3], "A", ["C", "D"], ["B"])
    tree = sim.tree()
    assert leaf_power(tree, sim.fabrics, "C", t) == Fraction(1, 2)
    assert leaf_power(tree, sim.fabrics, "D", t) == Fraction(1, 2)


def test_two_splits_quarter_matches_recursive_oracle():
    t, sim = build(BINARY, "A", ["C", "E", "F"], ["B", "D"])
    tree = sim.tree()
    oracle = propagate_power(tree)
    for m, want in {"C": Fraction(1, 2), "E": Fraction(1, 4), "F": Fraction(1, 4)}.items():
        assert leaf_power(tree, sim.fabrics, m, t) == want == oracle[m]


def test_member_drop_is_a_free_tap():
    # D is a member and also feeds E and F downstream.
    t, sim = build(BINARY, "A", ["D", "E", "F"], ["B", "D"])
    tree = sim.tree()
    assert leaf_power(tree, sim.fabrics, "D", t) == 1
    assert leaf_power(tree, sim.fabrics, "E", t) == Fraction(1, 2)


def test_amplification():
    t, sim = build(BINARY, "A", ["C", "E", "F"], ["B", "D"])
    assert leaf_power(sim.tree(), sim.fabrics, "E", t, {"B": 2, "D": 2}) == 1
    with pytest.raises(ValueError):
        leaf_power(sim.tree(), sim.fabrics, "E", t, {"B": Fraction(1, 2)})


def test_source_splits_electrically():
    t, sim = build([("A", "B"), ("A", "C")], "A", ["B", "C"], [])
    assert leaf_power(sim.tree(), sim.fabrics, "B", t) == 1


def test_broken_chain_names_gap():
    t, sim = build([("A", "B"), ("B", "C")], "A", ["C"], [])
    fabrics = dict(sim.fabrics)
    fabrics["B"] = type(fabrics["B"])("B")
    with pytest.raises(BrokenChain, match="gap at B"):
        leaf_power(sim.tree(), fabrics, "C", t)
    with pytest.raises(BrokenChain):
        leaf_power(sim.tree(), sim.fabrics, "B", t)


def test_path_to_and_digest():
    t, sim = build(BINARY, "A", ["F"], ["B", "D"])
    tree = sim.tree()
    assert tree.path_to("F") == ["A", "B", "D", "F"]
    assert tree.digest() == sim.tree().digest() and len(tree.digest()) == 16


@given(st.integers(3, 14), st.integers(0, 10_000), st.data())
def test_leaf_power_equals_recursive_propagation(n, seed, data):
    t = generate_topology("random-connected", n, 1.0, seed=seed)
    ids = list(t.node_ids)
    source = data.draw(st.sampled_from(ids))
    members = data.draw(st.lists(st.sampled_from([v for v in ids if v != source]), min_size=1, unique=True))
    sim = Simulation(t, source)
    for m in members:
        assert sim.join(m).ok
    tree = sim.tree()
    oracle = propagate_power(tree)
    for m in members:
        assert leaf_power(tree, sim.fabrics, m, t) == oracle[m]
    # Every optical split conserves power.
    for node, fabric in sim.fabrics.items():
        for (in_port, w) in fabric.branches:
            if (in_port, w) not in fabric.electrical:
                assert sum(fabric.power_factors(in_port, w).values()) == 1
