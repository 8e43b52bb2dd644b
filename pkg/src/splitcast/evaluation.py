"""Five-regime cost comparison, scenario files and size sweeps.

The cost of a run is the number of control-message link traversals spent
on its join episodes (failed joins included).  Prune traffic is recorded
separately.  Splitter databases are precomputed; their dissemination is
not part of the metric.

Rows of a :class:`RegimeReport`::

    all-splitters           every node an MC-OXC, knowledge regime
    knowledge+on-path       scenario placement, knowledge regime
    no-knowledge+on-path    scenario placement, no-knowledge regime
    knowledge+off-path      scenario placement, knowledge regime
    no-knowledge+off-path   scenario placement, no-knowledge regime

Each sparse row carries ``held``: whether every conflict episode seen
under that placement matched the row's condition.  A conflict-free run
holds for both conditions.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import CostLedger, EpisodeResult, Simulation
from .protocol import ProtocolParams, Regime
from .topology import Topology, TopologyFormatError, generate_topology, load_topology
from .tree import LightTree

__all__ = [
    "ROWS",
    "Scenario",
    "ScenarioRun",
    "RegimeRow",
    "RegimeReport",
    "SweepTable",
    "run_scenario",
    "compare_regimes",
    "observed_condition",
    "make_trial",
    "search_placement",
    "member_count",
    "sweep",
    "load_scenario",
    "save_scenario",
    "ScenarioFormatError",
]

ROWS = (
    "all-splitters",
    "knowledge+on-path",
    "no-knowledge+on-path",
    "knowledge+off-path",
    "no-knowledge+off-path",
)
_ROW_REGIME = {
    "all-splitters": Regime.KNOWLEDGE,
    "knowledge+on-path": Regime.KNOWLEDGE,
    "no-knowledge+on-path": Regime.NO_KNOWLEDGE,
    "knowledge+off-path": Regime.KNOWLEDGE,
    "no-knowledge+off-path": Regime.NO_KNOWLEDGE,
}


class ScenarioFormatError(TopologyFormatError):
    pass


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    source: str
    joins: tuple[str, ...]
    prunes: tuple[str, ...] = ()
    params: ProtocolParams = field(default_factory=ProtocolParams)
    seed: int = 0
    rows: tuple[str, ...] = ROWS

    def __post_init__(self):
        ids = set(self.topology.node_ids)
        for n in (self.source, *self.joins, *self.prunes):
            if n not in ids:
                raise ValueError(f"unknown node {n!r} in scenario")
        if len(set(self.joins)) != len(self.joins):
            raise ValueError("join list repeats a node")
        for r in self.rows:
            if r not in ROWS:
                raise ValueError(f"unknown regime row {r!r}")


@dataclass
class ScenarioRun:
    regime: str
    join_cost: CostLedger
    prune_cost: CostLedger
    episodes: list[EpisodeResult]
    tree: LightTree
    simulation: Simulation

    @property
    def conflicts(self):
        return [c for e in self.episodes for c in e.conflicts]

    @property
    def failures(self) -> list[EpisodeResult]:
        return [e for e in self.episodes if not e.ok]


def run_scenario(s: Scenario, regime: str, topology: Topology | None = None) -> ScenarioRun:
    """Join every member in order, then prune in order, under one regime."""
    topo = topology or s.topology
    sim = Simulation(topo, s.source, replace(s.params, regime=regime))
    join_cost, prune_cost = CostLedger(), CostLedger()
    episodes = []
    for m in s.joins:
        r = sim.join(m)
        join_cost = join_cost + r.cost
        episodes.append(r)
    for m in s.prunes:
        if m not in sim.members():
            continue
        r = sim.prune(m)
        prune_cost = prune_cost + r.cost
        episodes.append(r)
    return ScenarioRun(regime, join_cost, prune_cost, episodes, sim.tree(), sim)


def observed_condition(runs: Iterable[ScenarioRun]) -> str:
    """``conflict-free``, ``on-path``, ``off-path`` or ``mixed`` over all conflict episodes."""
    labels = {c.label for r in runs for c in r.conflicts}
    if not labels:
        return "conflict-free"
    if len(labels) == 1:
        return labels.pop()
    return "mixed"


@dataclass(frozen=True)
class RegimeRow:
    name: str
    regime: str
    cost: CostLedger
    prune_cost: int
    joined: int
    failed: tuple[str, ...]
    electrical: bool
    branches: int
    tree_hash: str
    held: bool

    @property
    def outcome(self) -> str:
        if not self.failed:
            return "ok"
        return "failed:" + ",".join(self.failed)


_COLUMNS = ("row", "regime", "held", "cost", "prune_cost", "joined", "outcome", "branches", "tree")


@dataclass(frozen=True)
class RegimeReport:
    rows: tuple[RegimeRow, ...]
    condition: str
    episodes: tuple[tuple[str, int, str, str], ...]
    optimal_branches: int | None = None
    notes: tuple[str, ...] = ()

    def row(self, name: str) -> RegimeRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def cost(self, name: str) -> int:
        return self.row(name).cost.total

    def _cells(self, r: RegimeRow) -> list[str]:
        outcome = r.outcome + ("+oeo" if r.electrical else "")
        return [r.name, r.regime, "yes" if r.held else "no", str(r.cost.total),
                str(r.prune_cost), str(r.joined), outcome, str(r.branches), r.tree_hash]

    def to_text(self, fmt: str = "table") -> str:
        if fmt == "delimited":
            lines = ["\t".join(_COLUMNS)] + ["\t".join(self._cells(r)) for r in self.rows]
            return "\n".join(lines) + "\n"
        if fmt == "table":
            return _table([list(_COLUMNS)] + [self._cells(r) for r in self.rows]) + f"condition: {self.condition}\n"
        if fmt == "report":
            return self.to_report()
        raise ValueError(f"unknown format {fmt!r}")

    def to_report(self) -> str:
        """Structured text: a ``[summary]`` block then one block per row."""
        out = ["# splitcast report v1", "[summary]", f"condition = {self.condition}",
               "cost_metric = control-message link traversals during joins",
               "database_dissemination = excluded"]
        if self.optimal_branches is not None:
            out.append(f"optimal_branches = {self.optimal_branches}")
        for note in self.notes:
            out.append(f"note = {note}")
        for regime, ep, node, label in self.episodes:
            out.append(f"conflict = {regime} episode={ep} node={node} label={label}")
        for r in self.rows:
            out += ["", f"[row {r.name}]", f"regime = {r.regime}", f"held = {'yes' if r.held else 'no'}",
                    f"cost = {r.cost.total}"]
            out += [f"cost.{k} = {v}" for k, v in r.cost.by_kind.items()]
            out += [f"prune_cost = {r.prune_cost}", f"joined = {r.joined}", f"outcome = {r.outcome}",
                    f"electrical = {'yes' if r.electrical else 'no'}", f"branches = {r.branches}",
                    f"tree = {r.tree_hash}"]
        return "\n".join(out) + "\n"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def _row(name: str, run: ScenarioRun, held: bool) -> RegimeRow:
    joined = sum(1 for e in run.episodes if e.stimulus == "join" and e.ok)
    failed = tuple(sorted({e.reason or e.outcome for e in run.failures}))
    electrical = any(e.electrical for e in run.episodes)
    return RegimeRow(name, run.regime, run.join_cost, run.prune_cost.total, joined, failed,
                     electrical, len(run.tree.branches), run.tree.digest(), held)


def compare_regimes(s: Scenario, with_oracle: bool = False) -> RegimeReport:
    """Run the scenario under every requested row and tabulate the costs."""
    runs: dict[str, ScenarioRun] = {}
    if "all-splitters" in s.rows:
        full = s.topology.with_splitters(s.topology.node_ids)
        runs["all-splitters"] = run_scenario(s, Regime.KNOWLEDGE, full)
    sparse = {}
    for regime in (Regime.KNOWLEDGE, Regime.NO_KNOWLEDGE):
        if any(_ROW_REGIME[r] == regime for r in s.rows if r != "all-splitters"):
            sparse[regime] = run_scenario(s, regime)
    condition = observed_condition(sparse.values())

    rows = []
    for name in s.rows:
        if name == "all-splitters":
            rows.append(_row(name, runs[name], True))
            continue
        want = name.split("+")[1]
        held = condition in (want, "conflict-free")
        rows.append(_row(name, sparse[_ROW_REGIME[name]], held))

    episodes = tuple(
        (regime, c.episode, c.node, c.label)
        for regime, run in sorted(sparse.items()) for c in run.conflicts)
    notes = []
    if s.prunes:
        notes.append("a pruned source-local branch is released at the source on timeout")
    optimal = None
    if with_oracle:
        from .oracles import Infeasible, brute_force_tree
        try:
            optimal = len(brute_force_tree(s.topology, s.source, s.joins).branches)
        except Infeasible:
            notes.append("oracle: infeasible")
    return RegimeReport(tuple(rows), condition, episodes, optimal, tuple(notes))


# -- scenario files ------------------------------------------------------------

_SCENARIO_KEYS = {"topology", "generator", "nodes", "splitter_fraction", "topology_seed",
                  "source", "joins", "prunes", "rows", "seed"}
_PARAM_KEYS = {"type3_ttl", "type4_ttl", "type4_cap", "prune_timeout", "database_k",
               "oeo_fallback", "power_threshold", "max_ticks"}


def load_scenario(text: str, base: str | os.PathLike = ".", seed: int | None = None) -> Scenario:
    """Parse a scenario file.

    ::

        # splitcast scenario v1
        [scenario]
        topology = net.txt        # relative to the scenario file
        source = n00
        joins = n03 n07
        prunes = n03
        seed = 7
        [params]
        type3_ttl = 2
        oeo_fallback = false

    Instead of ``topology`` a scenario may give ``generator``, ``nodes``,
    ``splitter_fraction`` and ``topology_seed`` (default: the scenario seed).
    ``seed`` overrides the file's seed.
    """
    section = None
    values: dict[str, dict[str, tuple[str, int]]] = {"scenario": {}, "params": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in values:
                raise ScenarioFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise ScenarioFormatError("entry outside a section", lineno)
        if "=" not in line:
            raise ScenarioFormatError(f"expected key = value, got {line!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        allowed = _SCENARIO_KEYS if section == "scenario" else _PARAM_KEYS
        if key not in allowed:
            raise ScenarioFormatError(f"unknown key {key!r} in [{section}]", lineno)
        if key in values[section]:
            raise ScenarioFormatError(f"duplicate key {key!r}", lineno)
        values[section][key] = (value, lineno)

    sc, pr = values["scenario"], values["params"]

    def num(entry, cast, what):
        value, lineno = entry
        try:
            return cast(value)
        except ValueError:
            raise ScenarioFormatError(f"{what}: bad value {value!r}", lineno) from None

    if seed is None:
        seed = num(sc["seed"], int, "seed") if "seed" in sc else 0

    if "topology" in sc:
        path = Path(base) / sc["topology"][0]
        try:
            topology = load_topology(path.read_text())
        except TopologyFormatError as exc:
            raise ScenarioFormatError(exc.detail, exc.line, str(path)) from None
        except OSError as exc:
            raise ScenarioFormatError(f"cannot read topology {path}: {exc.strerror}", sc["topology"][1]) from None
    elif "generator" in sc:
        if "nodes" not in sc:
            raise ScenarioFormatError("generator needs nodes", sc["generator"][1])
        topology = generate_topology(
            sc["generator"][0], num(sc["nodes"], int, "nodes"),
            num(sc["splitter_fraction"], float, "splitter_fraction") if "splitter_fraction" in sc else 0.0,
            num(sc["topology_seed"], int, "topology_seed") if "topology_seed" in sc else seed)
    else:
        raise ScenarioFormatError("scenario needs topology or generator")
    for key in ("source", "joins"):
        if key not in sc:
            raise ScenarioFormatError(f"missing key {key!r}")

    kw = {}
    for key, entry in pr.items():
        if key == "oeo_fallback":
            if entry[0] not in ("true", "false"):
                raise ScenarioFormatError("oeo_fallback must be true or false", entry[1])
            kw[key] = entry[0] == "true"
        elif key == "power_threshold":
            kw[key] = num(entry, float, key)
        else:
            kw[key] = num(entry, int, key)
    try:
        params = ProtocolParams(**kw)
        return Scenario(
            topology, sc["source"][0], tuple(sc["joins"][0].split()),
            tuple(sc["prunes"][0].split()) if "prunes" in sc else (),
            params, seed,
            tuple(sc["rows"][0].split()) if "rows" in sc else ROWS)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from None


def save_scenario(s: Scenario, topology_path: str) -> str:
    out = ["# splitcast scenario v1", "[scenario]", f"topology = {topology_path}",
           f"source = {s.source}", f"joins = {' '.join(s.joins)}"]
    if s.prunes:
        out.append(f"prunes = {' '.join(s.prunes)}")
    if s.rows != ROWS:
        out.append(f"rows = {' '.join(s.rows)}")
    out += [f"seed = {s.seed}", "[params]"]
    for key in sorted(_PARAM_KEYS):
        v = getattr(s.params, key)
        if v is None or v == getattr(ProtocolParams(), key):
            continue
        out.append(f"{key} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(out) + "\n"


# -- sweeps --------------------------------------------------------------------

def member_count(n: int) -> int:
    return max(1, min(n - 1, 2 + n // 25))


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


@dataclass(frozen=True)
class Trial:
    """One skeleton with an on-path and an off-path placement of splitters."""

    size: int
    index: int
    on_path: Scenario
    off_path: Scenario
    costs: dict[str, int]


def _repair(topo: Topology, placement: set[str], record, want: str, ttl: int, source: str) -> bool:
    """Move splitters so the conflict at ``record.node`` matches ``want``."""
    x = record.node
    reach = topo.route(x, source)[1:ttl + 2]
    before = set(placement)
    if want == "on-path":
        head = reach[0]
        placement.add(head)
        # Anything the database would rank ahead of the next hop must go.
        for nb in topo.neighbors(x):
            if nb < head:
                placement.discard(nb)
    else:
        placement.difference_update(reach)
    placement.discard(x)
    return placement != before


def search_placement(topo: Topology, source: str, joins: tuple[str, ...], want: str,
                     rng: np.random.Generator, params: ProtocolParams | None = None,
                     budget: int = 40) -> Scenario | None:
    """Find a splitter placement whose every conflict episode is labeled ``want``.

    Starts from a random placement and repeatedly repairs the first
    conflict with the wrong label; restarts on failed joins or cycles.
    Every join must succeed under both regimes and, with two or more
    members, at least one conflict must occur.
    """
    params = params or ProtocolParams()
    ids = list(topo.node_ids)
    n = len(ids)
    ttl = params.resolved(topo).type3_ttl
    lo, hi = (0.3, 0.7) if want == "on-path" else (0.05, 0.25)
    placement: set[str] | None = None
    seen: set[frozenset[str]] = set()
    for _ in range(budget):
        if placement is None or frozenset(placement) in seen:
            count = max(1, int(round(rng.uniform(lo, hi) * n)))
            placement = {ids[i] for i in rng.choice(n, size=count, replace=False)}
        seen.add(frozenset(placement))
        s = Scenario(topo.with_splitters(sorted(placement)), source, joins, (), params)
        know = run_scenario(s, Regime.KNOWLEDGE)
        if know.failures:
            placement = None
            continue
        bad = next((c for c in know.conflicts if c.label != want), None)
        if bad is not None:
            if not _repair(topo, placement, bad, want, ttl, source):
                placement = None
            continue
        if not know.conflicts and len(joins) >= 2:
            # Create a conflict by taking away a splitter the tree branches at.
            tree = know.tree
            branching = sorted(v for v in tree.nodes if v != source and len(tree.children(v)) > 1)
            if not branching:
                placement = None
                continue
            placement.discard(branching[int(rng.integers(len(branching)))])
            continue
        none = run_scenario(s, Regime.NO_KNOWLEDGE)
        if none.failures or observed_condition([know, none]) not in (want, "conflict-free"):
            placement = None
            continue
        return s
    return None


def make_trial(n: int, index: int, seed: int, params: ProtocolParams | None = None,
               max_skeletons: int = 50) -> Trial:
    """Draw a skeleton, source and members, then an on-path and an off-path placement."""
    params = params or ProtocolParams()
    k = member_count(n)
    for sk in range(max_skeletons):
        rng = _rng(seed, n, index, sk)
        topo = generate_topology("random-connected", n, 0.0, int(rng.integers(2**31)))
        ids = list(topo.node_ids)
        picks = [ids[i] for i in rng.permutation(n)[: k + 1]]
        source, joins = picks[0], tuple(picks[1:])
        on = search_placement(topo, source, joins, "on-path", rng, params)
        if on is None:
            continue
        off = search_placement(topo, source, joins, "off-path", rng, params)
        if off is None:
            continue
        on, off = replace(on, seed=seed), replace(off, seed=seed)
        a, b = compare_regimes(on), compare_regimes(off)
        costs = {r: (a if "on-path" in r or r == "all-splitters" else b).cost(r) for r in ROWS}
        return Trial(n, index, on, off, costs)
    raise RuntimeError(f"no qualifying placements for N={n}, trial {index}")


def _trial_costs(args) -> tuple[int, int, dict[str, int]]:
    n, index, seed = args
    t = make_trial(n, index, seed)
    return n, index, t.costs


@dataclass(frozen=True)
class SweepTable:
    sizes: tuple[int, ...]
    trials: int
    seed: int
    costs: dict[tuple[str, int], tuple[int, ...]]

    def mean(self, row: str, n: int) -> float:
        return float(np.mean(self.costs[row, n]))

    def spread(self, row: str, n: int) -> float:
        return float(np.std(self.costs[row, n]))

    def to_text(self, fmt: str = "table") -> str:
        head = ["row"] + [f"N={n}" for n in self.sizes]
        body = [[r] + [f"{self.mean(r, n):.2f}±{self.spread(r, n):.2f}" for n in self.sizes] for r in ROWS]
        if fmt == "table":
            return _table([head] + body)
        if fmt == "delimited":
            lines = ["\t".join(["row", "size", "trials", "mean", "std", "min", "max"])]
            for r in ROWS:
                for n in self.sizes:
                    c = self.costs[r, n]
                    lines.append("\t".join([r, str(n), str(len(c)), f"{self.mean(r, n):.4f}",
                                            f"{self.spread(r, n):.4f}", str(min(c)), str(max(c))]))
            return "\n".join(lines) + "\n"
        raise ValueError(f"unknown format {fmt!r}")


def sweep(sizes: Sequence[int], trials: int, seed: int, workers: int = 1) -> SweepTable:
    """Mean and spread of every row's cost over ``trials`` trials per size."""
    if any(n < 2 for n in sizes) or trials < 1:
        raise ValueError("sizes must be >= 2 and trials positive")
    tasks = [(n, i, seed) for n in sizes for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_costs, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_trial_costs(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    costs = {(r, n): tuple(c[r] for m, _, c in results if m == n) for r in ROWS for n in sizes}
    return SweepTable(tuple(sizes), trials, seed, costs)


