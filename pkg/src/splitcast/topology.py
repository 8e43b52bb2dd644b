"""Network model: OXC / MC-OXC nodes, fiber links, hop-count routing.

All tie-breaking is lexicographic by node id.  Generated topologies name
their nodes ``n00``, ``n01``, ... so that lexicographic order matches
numeric order.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "NodeDescriptor",
    "Topology",
    "SplitterDatabase",
    "TopologyError",
    "TopologyFormatError",
    "build_topology",
    "explicit_topology",
    "generate_topology",
    "shortest_path",
    "build_splitter_database",
    "load_topology",
    "save_topology",
    "GENERATORS",
]

GENERATORS = ("ring", "grid", "random-connected")


class TopologyError(ValueError):
    """Invalid topology construction request."""


class TopologyFormatError(TopologyError):
    """Malformed serialized topology."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.detail = message
        self.path = path
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class NodeDescriptor:
    id: str
    port_count: int
    is_splitter: bool = False
    has_wavelength_conversion: bool = False
    max_fanout: int = 1

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id) or "=" in self.id:
            raise TopologyError(f"invalid node id {self.id!r}")
        if self.port_count < 1:
            raise TopologyError(f"node {self.id}: port_count must be positive")
        if self.is_splitter:
            if not 1 < self.max_fanout <= self.port_count:
                raise TopologyError(
                    f"node {self.id}: splitter needs 1 < max_fanout <= port_count "
                    f"(got {self.max_fanout}, P={self.port_count})"
                )
        elif self.max_fanout != 1:
            raise TopologyError(f"node {self.id}: non-splitter must have max_fanout 1")


@dataclass(frozen=True)
class SplitterDatabase:
    """Splitters known to ``owner``, nearest first."""

    owner: str
    nearest: tuple[tuple[str, int], ...]
    truncated: bool = False

    def closest(self, exclude: Iterable[str] = ()) -> tuple[str, int] | None:
        skip = set(exclude)
        for entry in self.nearest:
            if entry[0] not in skip:
                return entry
        return None


class _Routing:
    """Lazily built breadth-first trees, shared by topologies with equal links."""

    def __init__(self, adjacency: Mapping[str, tuple[str, ...]]):
        self.adj = adjacency
        self._trees: dict[str, tuple[dict, dict]] = {}
        self._diameter: int | None = None

    def tree(self, root: str) -> tuple[dict[str, str | None], dict[str, int]]:
        cached = self._trees.get(root)
        if cached is None:
            cached = _bfs_tree(self.adj, root)
            self._trees[root] = cached
        return cached

    def diameter(self) -> int:
        if self._diameter is None:
            self._diameter = max(max(self.tree(v)[1].values()) for v in self.adj)
        return self._diameter


def _bfs_tree(adj, root, blocked=frozenset()):
    # FIFO BFS over id-sorted adjacency discovers every node from the
    # predecessor whose root path is lexicographically smallest.
    parent: dict[str, str | None] = {root: None}
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in dist or v in blocked:
                continue
            dist[v] = dist[u] + 1
            parent[v] = u
            queue.append(v)
    return parent, dist


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeDescriptor, ...]
    links: tuple[tuple[str, str], ...]
    wavelengths_per_fiber: int
    seed: int | None = None
    _index: dict = field(init=False, repr=False, compare=False, hash=False)
    _adj: dict = field(init=False, repr=False, compare=False, hash=False)
    _routing: _Routing = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {n.id: n for n in self.nodes}
        adj: dict[str, list[str]] = {n: [] for n in sorted(index)}
        for a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adj", {k: tuple(sorted(v)) for k, v in adj.items()})
        object.__setattr__(self, "_routing", _Routing(self._adj))

    # -- queries -----------------------------------------------------------
    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(self._adj)

    @property
    def splitters(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.is_splitter)

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    def node(self, node_id: str) -> NodeDescriptor:
        try:
            return self._index[node_id]
        except KeyError:
            raise TopologyError(f"unknown node {node_id!r}") from None

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._adj[node_id]

    def degree(self, node_id: str) -> int:
        return len(self.neighbors(node_id))

    def port(self, node_id: str, neighbor: str) -> int:
        """Port index of ``neighbor`` at ``node_id`` (i-th incident link by id)."""
        try:
            return self._adj[node_id].index(neighbor)
        except ValueError:
            raise TopologyError(f"no link {node_id}-{neighbor}") from None

    def port_neighbor(self, node_id: str, port: int) -> str:
        return self._adj[node_id][port]

    def distance(self, a: str, b: str) -> int:
        self.node(a), self.node(b)
        return self._routing.tree(b)[1][a]

    def next_hop(self, here: str, dest: str) -> str:
        """Next node on the route from ``here`` toward ``dest``.

        Routes toward ``dest`` follow the reverse of ``shortest_path(dest, here)``,
        i.e. they are hop-by-hop consistent and converge on ``dest``'s BFS tree.
        """
        self.node(here), self.node(dest)
        if here == dest:
            raise TopologyError(f"{here} is already the destination")
        return self._routing.tree(dest)[0][here]

    def route(self, here: str, dest: str) -> list[str]:
        path = shortest_path(self, dest, here)
        path.reverse()
        return path

    @property
    def diameter(self) -> int:
        return self._routing.diameter()

    def with_splitters(self, splitters: Iterable[str], max_fanout: int | None = None) -> "Topology":
        """Same skeleton with a different splitter placement."""
        chosen = set(splitters)
        for s in chosen:
            self.node(s)
        nodes = []
        for n in self.nodes:
            if n.id in chosen:
                ports = max(2, n.port_count)
                nodes.append(replace(n, port_count=ports, is_splitter=True,
                                     max_fanout=min(max_fanout or ports, ports)))
            else:
                nodes.append(replace(n, is_splitter=False, max_fanout=1))
        out = Topology(tuple(nodes), self.links, self.wavelengths_per_fiber, self.seed)
        object.__setattr__(out, "_routing", self._routing)
        return out

    def content_hash(self) -> str:
        return hashlib.sha256(save_topology(self).encode()).hexdigest()


# -- construction --------------------------------------------------------------

def _components(ids, links):
    adj = {n: set() for n in ids}
    for a, b in links:
        adj[a].add(b)
        adj[b].add(a)
    seen, comps = set(), []
    for start in sorted(ids):
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def explicit_topology(
    nodes: Sequence[NodeDescriptor | str],
    links: Iterable[tuple[str, str]],
    wavelengths_per_fiber: int = 4,
    seed: int | None = None,
    splitters: Iterable[str] = (),
) -> Topology:
    """Validate and freeze an explicit node/link list.

    Plain string ids become OXCs with ``port_count`` equal to their degree
    (ids listed in ``splitters`` become MC-OXCs with ``max_fanout = port_count``).
    """
    if wavelengths_per_fiber < 1:
        raise TopologyError("wavelengths_per_fiber must be positive")
    link_set: set[tuple[str, str]] = set()
    for a, b in links:
        if a == b:
            raise TopologyError(f"self-loop at {a}")
        key = (a, b) if a < b else (b, a)
        if key in link_set:
            raise TopologyError(f"parallel link {key[0]}-{key[1]}")
        link_set.add(key)
    ids = [n.id if isinstance(n, NodeDescriptor) else n for n in nodes]
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate node id")
    if len(ids) < 2:
        raise TopologyError("need at least 2 nodes")
    idset = set(ids)
    for a, b in link_set:
        for end in (a, b):
            if end not in idset:
                raise TopologyError(f"link {a}-{b} references undeclared node {end}")
    degree = {n: 0 for n in ids}
    for a, b in link_set:
        degree[a] += 1
        degree[b] += 1
    split = set(splitters)
    descriptors = []
    for n in nodes:
        if isinstance(n, NodeDescriptor):
            d = n
        else:
            p = max(degree[n], 2 if n in split else 1)
            d = NodeDescriptor(n, p, n in split, False, p if n in split else 1)
        if d.port_count < degree[d.id]:
            raise TopologyError(f"node {d.id}: port_count {d.port_count} < degree {degree[d.id]}")
        descriptors.append(d)
    comps = _components(ids, link_set)
    if len(comps) > 1:
        listing = "; ".join("{" + ", ".join(c) + "}" for c in comps)
        raise TopologyError(f"topology is disconnected: components {listing}")
    return Topology(tuple(sorted(descriptors)), tuple(sorted(link_set)), wavelengths_per_fiber, seed)


def _place_splitters(ids: list[str], fraction: float, rng) -> set[str]:
    count = math.floor(fraction * len(ids) + 0.5)
    picks = rng.choice(len(ids), size=count, replace=False) if count else []
    return {ids[i] for i in picks}


def generate_topology(
    generator: str,
    n: int,
    splitter_fraction: float = 0.0,
    seed: int = 0,
    wavelengths_per_fiber: int = 4,
    extra_links: int | None = None,
) -> Topology:
    """Generate a connected ring, grid or random topology.

    ``random-connected`` grows a random spanning tree and then adds
    ``extra_links`` chords (default ``n // 2``), giving mean degree near 3.
    Splitter placement draws exactly ``round(fraction * n)`` nodes.
    """
    if n < 2:
        raise TopologyError("node count must be >= 2")
    if not 0.0 <= splitter_fraction <= 1.0:
        raise TopologyError(f"splitter fraction {splitter_fraction} outside [0, 1]")
    width = len(str(n - 1))
    ids = [f"n{i:0{max(2, width)}d}" for i in range(n)]
    rng = np.random.default_rng(seed)
    links: set[tuple[str, str]] = set()

    def add(i, j):
        a, b = sorted((ids[i], ids[j]))
        links.add((a, b))

    if generator == "ring":
        if n == 2:
            add(0, 1)
        else:
            for i in range(n):
                add(i, (i + 1) % n)
    elif generator == "grid":
        cols = math.ceil(math.sqrt(n))
        for i in range(n):
            if (i + 1) % cols and i + 1 < n:
                add(i, i + 1)
            if i + cols < n:
                add(i, i + cols)
    elif generator == "random-connected":
        order = rng.permutation(n)
        for k in range(1, n):
            add(int(order[k]), int(order[rng.integers(k)]))
        want = n // 2 if extra_links is None else extra_links
        max_links = n * (n - 1) // 2
        target = min(max_links, len(links) + want)
        while len(links) < target:
            i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
            add(i, j)
    else:
        raise TopologyError(f"unknown generator {generator!r}; expected one of {GENERATORS}")

    split = _place_splitters(ids, splitter_fraction, rng)
    return explicit_topology(ids, links, wavelengths_per_fiber, seed, splitters=split)


def build_topology(config: Mapping) -> Topology:
    """Build from a mapping: either ``nodes``/``links`` or ``generator``/``nodes``."""
    config = dict(config)
    generator = config.pop("generator", None)
    if generator is None:
        try:
            nodes, links = config.pop("nodes"), config.pop("links")
        except KeyError as exc:
            raise TopologyError(f"explicit topology missing {exc.args[0]!r}") from None
        return explicit_topology(nodes, links, **config)
    if "seed" not in config:
        raise TopologyError("generated topologies need a seed")
    n = config.pop("nodes")
    return generate_topology(generator, int(n), **config)


# -- routing -------------------------------------------------------------------

def shortest_path(t: Topology, a: str, b: str, avoid: Iterable[str] = ()) -> list[str]:
    """Minimum-hop path ``a .. b``; ties go to the lexicographically smallest sequence.

    Nodes in ``avoid`` (other than the endpoints) are never traversed.
    Raises ``TopologyError`` if no such path exists.
    """
    t.node(a), t.node(b)
    blocked = frozenset(avoid) - {a, b}
    if blocked:
        parent, _ = _bfs_tree(t._adj, a, blocked)
    else:
        parent = t._routing.tree(a)[0]
    if b not in parent:
        raise TopologyError(f"no path {a} -> {b}")
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def build_splitter_database(t: Topology, owner: str, k: int | None = None) -> SplitterDatabase:
    """Splitters sorted by hop distance from ``owner``, ties by id; ``k`` truncates."""
    dist = t._routing.tree(owner)[1]
    entries = sorted(((dist[s], s) for s in t.splitters))
    truncated = k is not None and len(entries) > k
    if k is not None:
        entries = entries[:k]
    return SplitterDatabase(owner, tuple((s, d) for d, s in entries), truncated)


# -- text format ---------------------------------------------------------------

_NODE_FIELDS = ("port_count", "is_splitter", "max_fanout", "has_wavelength_conversion")
_HEADER_FIELDS = ("wavelengths_per_fiber", "seed")


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


def save_topology(t: Topology) -> str:
    lines = ["# splitcast topology v1", "[header]", f"wavelengths_per_fiber = {t.wavelengths_per_fiber}"]
    if t.seed is not None:
        lines.append(f"seed = {t.seed}")
    lines.append("[nodes]")
    for n in t.nodes:
        lines.append(
            f"{n.id} port_count={n.port_count} is_splitter={_fmt_bool(n.is_splitter)} "
            f"max_fanout={n.max_fanout} has_wavelength_conversion={_fmt_bool(n.has_wavelength_conversion)}"
        )
    lines.append("[links]")
    lines.extend(f"{a} {b}" for a, b in t.links)
    return "\n".join(lines) + "\n"


def _parse_int(value: str, what: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise TopologyFormatError(f"{what}: expected integer, got {value!r}", lineno) from None


def _parse_bool(value: str, what: str, lineno: int) -> bool:
    if value in ("true", "1"):
        return True
    if value in ("false", "0"):
        return False
    raise TopologyFormatError(f"{what}: expected true/false, got {value!r}", lineno)


def load_topology(text: str) -> Topology:
    section = None
    header: dict[str, int] = {}
    nodes: list[NodeDescriptor] = []
    links: list[tuple[str, str]] = []
    link_lines: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("header", "nodes", "links"):
                raise TopologyFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise TopologyFormatError("content before first section", lineno)
        if section == "header":
            key, sep, value = (p.strip() for p in line.partition("="))
            if not sep:
                raise TopologyFormatError("expected 'key = value'", lineno)
            if key not in _HEADER_FIELDS:
                raise TopologyFormatError(f"unknown header field {key!r}", lineno)
            header[key] = _parse_int(value, key, lineno)
        elif section == "nodes":
            node_id, *fields = line.split()
            values = {}
            for item in fields:
                key, sep, value = item.partition("=")
                if not sep:
                    raise TopologyFormatError(f"node {node_id}: expected key=value, got {item!r}", lineno)
                if key not in _NODE_FIELDS:
                    raise TopologyFormatError(f"node {node_id}: unknown field {key!r}", lineno)
                values[key] = value
            missing = [f for f in _NODE_FIELDS if f not in values]
            if missing:
                raise TopologyFormatError(f"node {node_id}: missing field(s) {', '.join(missing)}", lineno)
            try:
                nodes.append(NodeDescriptor(
                    node_id,
                    _parse_int(values["port_count"], "port_count", lineno),
                    _parse_bool(values["is_splitter"], "is_splitter", lineno),
                    _parse_bool(values["has_wavelength_conversion"], "has_wavelength_conversion", lineno),
                    _parse_int(values["max_fanout"], "max_fanout", lineno),
                ))
            except TopologyFormatError:
                raise
            except TopologyError as exc:
                raise TopologyFormatError(str(exc), lineno) from None
        else:
            parts = line.split()
            if len(parts) != 2:
                raise TopologyFormatError("link record needs exactly two node ids", lineno)
            links.append((parts[0], parts[1]))
            link_lines[tuple(sorted(parts))] = lineno
    if "wavelengths_per_fiber" not in header:
        raise TopologyFormatError("missing required header field 'wavelengths_per_fiber'")
    declared = {n.id for n in nodes}
    for a, b in links:
        for end in (a, b):
            if end not in declared:
                raise TopologyFormatError(
                    f"link {a}-{b} references undeclared node {end!r}", link_lines[tuple(sorted((a, b)))]
                )
    try:
        return explicit_topology(nodes, links, header["wavelengths_per_fiber"], header.get("seed"))
    except TopologyFormatError:
        raise
    except TopologyError as exc:
        raise TopologyFormatError(str(exc)) from None
