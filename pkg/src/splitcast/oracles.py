"""Exhaustive reference constructions for small instances.

These deliberately share no code with the routing tables or the signaling
engine so they can be used to check them.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

from .topology import Topology
from .tree import LightTree

__all__ = ["Infeasible", "brute_force_tree", "brute_force_spt", "propagate_power", "all_simple_paths"]


class Infeasible(Exception):
    """No tree satisfies the splitter constraints."""


def _adjacency(t: Topology) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {n.id: [] for n in t.nodes}
    for a, b in t.links:
        adj[a].append(b)
        adj[b].append(a)
    return {k: sorted(v) for k, v in adj.items()}


def all_simple_paths(t: Topology, a: str, b: str) -> list[tuple[str, ...]]:
    adj = _adjacency(t)
    out: list[tuple[str, ...]] = []
    stack = [(a, (a,))]
    while stack:
        node, path = stack.pop()
        if node == b:
            out.append(path)
            continue
        for nb in adj[node]:
            if nb not in path:
                stack.append((nb, path + (nb,)))
    return out


def brute_force_spt(t: Topology, source: str, members: Iterable[str]) -> LightTree:
    """Union of the minimum (length, id sequence) simple paths from the source."""
    members = frozenset(members)
    branches: set[tuple[str, str]] = set()
    for m in sorted(members):
        if m == source:
            continue
        best = min(all_simple_paths(t, source, m), key=lambda p: (len(p), p))
        branches.update(zip(best, best[1:]))
    return LightTree("oracle", source, members, frozenset(branches),
                     tuple(sorted((b, 0) for b in branches)))


def _capacity(t: Topology, node: str, source: str) -> int:
    if node == source:
        return len(t.nodes)
    d = t.node(node)
    return d.max_fanout if d.is_splitter else 1


def brute_force_tree(t: Topology, source: str, members: Iterable[str], max_nodes: int = 12) -> LightTree:
    """Smallest tree spanning source and members that branches only at splitters.

    The source may feed any number of branches.  Searches trees grown from the
    source level by level (by node count); among the smallest covering trees
    the one with the lexicographically smallest sorted edge list wins.
    """
    if len(t.nodes) > max_nodes:
        raise ValueError(f"exhaustive search limited to {max_nodes} nodes")
    members = frozenset(members)
    terminals = members | {source}
    adj = _adjacency(t)
    cap = {n.id: _capacity(t, n.id, source) for n in t.nodes}

    start = frozenset()
    level = {start}
    seen = {start}
    size = 1
    while level:
        covering = []
        for edges in level:
            nodes = {source} | {c for _, c in edges}
            if terminals <= nodes:
                covering.append(edges)
        if covering:
            best = min(covering, key=lambda e: sorted(e))
            return LightTree("oracle", source, members, best, tuple(sorted((b, 0) for b in best)))
        nxt = set()
        for edges in level:
            nodes = {source} | {c for _, c in edges}
            kids: dict[str, int] = {}
            for p, _ in edges:
                kids[p] = kids.get(p, 0) + 1
            for u in nodes:
                if kids.get(u, 0) >= cap[u]:
                    continue
                for v in adj[u]:
                    if v in nodes:
                        continue
                    grown = edges | {(u, v)}
                    if grown not in seen:
                        seen.add(grown)
                        nxt.add(grown)
        level = nxt
        size += 1
    raise Infeasible(f"no splitter-feasible tree spans {sorted(terminals)}")


def propagate_power(
    tree: LightTree,
    gains: Mapping[str, Fraction | int] | None = None,
    electrical: Iterable[str] = (),
) -> dict[str, Fraction]:
    """Power at every tree node, pushed down from the source one split at a time.

    The source and nodes listed in ``electrical`` regenerate each copy at
    full power; every other node divides its input evenly among its children.
    """
    gains = gains or {}
    regen = set(electrical) | {tree.source}
    children: dict[str, list[str]] = {}
    for p, c in tree.branches:
        children.setdefault(p, []).append(c)

    def visit(node: str, power: Fraction, out: dict):
        out[node] = power
        kids = children.get(node, [])
        if not kids:
            return
        share = Fraction(1) if node in regen else Fraction(1, len(kids))
        for c in kids:
            visit(c, power * Fraction(gains.get(node, 1)) * share, out)

    result: dict[str, Fraction] = {}
    visit(tree.source, Fraction(1), result)
    return result
