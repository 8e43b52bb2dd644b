"""Power loss at each member as a tree grows, and what a threshold does.

    python demos/power_budget.py
"""
from splitcast import ProtocolParams, Simulation, generate_topology, leaf_power

net = generate_topology("grid", 16, 1.0, seed=3)
ids = list(net.node_ids)
source, members = ids[0], ids[1:]

for threshold in (0.0, 0.3, 0.6):
    sim = Simulation(net, source, ProtocolParams(power_threshold=threshold))
    refused = [m for m in members if not sim.join(m).ok]
    tree = sim.tree()
    worst = min(leaf_power(tree, sim.fabrics, m, net) for m in sim.members())
    print(f"threshold {threshold}: {len(sim.members())} members, weakest leaf gets {worst}, "
          f"refused {' '.join(refused) or 'none'}")
