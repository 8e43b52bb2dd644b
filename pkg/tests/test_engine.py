import pytest
from hypothesis import given, strategies as st

from splitcast.engine import NonQuiescent, Simulation, SnapshotError, restore
from splitcast.protocol import ProtocolParams, ProtocolViolation, Regime, validate_tree
from splitcast.topology import explicit_topology, generate_topology


def hops(sim, start):
    return [tuple(line.split("\t")[1:4]) for line in sim.trace[start:]]


@pytest.fixture
def primed(six):
    def make(regime):
        sim = Simulation(six, "A", ProtocolParams(regime=regime))
        assert sim.join("C").cost.total == 2
        return sim
    return make


def test_knowledge_hand_trace(primed):
    sim = primed(Regime.KNOWLEDGE)
    start = len(sim.trace)
    r = sim.join("D")
    assert r.ok and r.cost.total == 7
    assert {k: v for k, v in r.cost.by_kind.items() if v} == {"JoinRequest": 4, "Type1": 1, "Type2": 2}
    assert hops(sim, start) == [
        ("JoinRequest", "D", "B"), ("Type1", "B", "S"), ("JoinRequest", "S", "A"),
        ("Type2", "S", "B"), ("Type2", "B", "D"),
        ("JoinRequest", "D", "E"), ("JoinRequest", "E", "S"),
    ]
    assert sorted(sim.tree().branches) == [("A", "B"), ("A", "S"), ("B", "C"), ("E", "D"), ("S", "E")]
    (c,) = r.conflicts
    assert (c.node, c.nearest, c.label) == ("B", "S", "off-path")


def test_no_knowledge_hand_trace(primed):
    sim = primed(Regime.NO_KNOWLEDGE)
    r = sim.join("D")
    assert r.ok and r.cost.total == 19
    assert {k: v for k, v in r.cost.by_kind.items() if v} == {
        "JoinRequest": 4, "Type1": 1, "Type2": 2, "Type3": 2, "Type4": 9, "Type4Ack": 1}
    assert sorted(sim.tree().branches) == [("A", "B"), ("A", "S"), ("B", "C"), ("E", "D"), ("S", "E")]


@pytest.mark.parametrize("regime", Regime.ALL)
def test_prune_costs_and_empty_tree(primed, regime):
    sim = primed(regime)
    sim.join("D")
    assert sim.prune("D").cost.total == 7
    assert sim.prune("C").cost.total == 2
    assert not sim.tree().branches
    assert validate_tree(sim.tree(), sim.fabrics, sim.topology).ok


def test_adjacent_join_costs_one(six):
    sim = Simulation(six, "A")
    r = sim.join("B")
    assert r.cost.total == 1 and sim.tree().branches == {("A", "B")}


def test_on_tree_relay_joins_for_free(six):
    sim = Simulation(six, "A")
    sim.join("C")
    r = sim.join("B")
    assert r.ok and r.cost.total == 0 and sim.members() == ["B", "C"]
    assert sim.join("C").cost.total == 0


def test_unknown_session(six):
    with pytest.raises(ProtocolViolation):
        Simulation(six, "A").join("C", session="nope")


def test_failed_join_rolls_back(six):
    t = explicit_topology(list("ABCD"), [("A", "B"), ("B", "C"), ("B", "D")])
    sim = Simulation(t, "A")
    sim.join("C")
    before = sim.snapshot()
    r = sim.join("D")
    assert r.outcome == "join-failed" and r.cost.total > 0
    after = sim.snapshot()
    # Only the bookkeeping counters move; the network state is unchanged.
    assert sim.tree().branches == {("A", "B"), ("B", "C")}
    assert before != after and sim.members() == ["C"]


def test_quiescence_limit(six):
    sim = Simulation(six, "A", ProtocolParams(max_ticks=1))
    with pytest.raises(NonQuiescent) as info:
        sim.join("D")
    assert info.value.residual
    assert sim.tree().branches == frozenset()


def test_snapshot_round_trip(primed):
    sim = primed(Regime.KNOWLEDGE)
    sim.join("D")
    text = sim.snapshot()
    back = restore(text, sim.topology)
    assert back.snapshot() == text
    assert back.tree() == sim.tree()
    # The restored simulator continues exactly like the original.
    a, b = sim.prune("D"), back.prune("D")
    assert a.cost == b.cost and sim.trace[-len(back.trace):] == back.trace


def test_snapshot_rejects_other_topology(six, line4):
    sim = Simulation(six, "A")
    with pytest.raises(SnapshotError):
        restore(sim.snapshot(), line4)
    with pytest.raises(SnapshotError):
        restore("garbage\n{}", six)
    header, _, body = sim.snapshot().partition("\n")
    with pytest.raises(SnapshotError):
        restore(header + "\n{not json", six)


@given(st.integers(0, 2**16), st.sampled_from(Regime.ALL))
def test_trace_is_deterministic(seed, regime):
    t = generate_topology("random-connected", 10, 0.3, seed)
    ids = [n.id for n in t.nodes]

    def run():
        sim = Simulation(t, ids[0], ProtocolParams(regime=regime))
        for n in ids[1:5]:
            sim.join(n)
        for n in ids[1:3]:
            if n in sim.members():
                sim.prune(n)
        return sim.trace_text(), sim.snapshot()

    assert run() == run()


@given(st.integers(0, 2**16), st.sampled_from(Regime.ALL), st.booleans())
def test_every_episode_leaves_a_valid_tree(seed, regime, oeo):
    t = generate_topology("random-connected", 9, 0.25, seed)
    ids = [n.id for n in t.nodes]
    sim = Simulation(t, ids[seed % 9], ProtocolParams(regime=regime, oeo_fallback=oeo))
    order = ids[:]
    for i, n in enumerate(order):
        if n == sim.sessions["s0"].source:
            continue
        if n in sim.members():
            sim.prune(n)
        else:
            sim.join(n)
        if i % 3 == 0 and sim.members():
            sim.prune(sim.members()[0])
        rep = validate_tree(sim.tree(), sim.fabrics, t)
        assert rep.ok, rep.violations
