"""Walk through one splitter conflict under both knowledge regimes.

Six nodes, one splitter S.  Member C joins first along A-B-C.  Then D joins:
its shortest route to the source runs through B, which already forwards C's
branch and cannot split, so the join has to be redirected to S.

    python demos/conflict_walkthrough.py
"""
from splitcast import ProtocolParams, Regime, Simulation, explicit_topology, leaf_power, validate_tree

LINKS = [("A", "B"), ("B", "C"), ("B", "D"), ("A", "S"), ("S", "E"), ("E", "D"), ("S", "B")]
net = explicit_topology(list("ABCDES"), LINKS, splitters=["S"])

for regime in Regime.ALL:
    sim = Simulation(net, "A", ProtocolParams(regime=regime))
    sim.join("C")
    mark = len(sim.trace)
    result = sim.join("D")
    print(f"== {regime}: D joins, {result.cost.total} control-message hops")
    for line in sim.trace[mark:]:
        tick, kind, src, dst, *_ = line.split("\t")
        print(f"  t={tick:>2}  {kind:<11} {src} -> {dst}")
    spent = {k: v for k, v in result.cost.by_kind.items() if v}
    print("  by kind:", spent)
    tree = sim.tree()
    print("  tree:", " ".join(f"{p}{c}" for p, c in sorted(tree.branches)))
    print("  power at C, D:", *(leaf_power(tree, sim.fabrics, m, net) for m in ("C", "D")))
    print("  valid:", validate_tree(tree, sim.fabrics, net).ok)
    print()
