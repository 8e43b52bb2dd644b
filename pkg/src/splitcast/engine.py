"""Deterministic discrete-event loop driving the signaling handlers.

One link traversal takes one tick and handlers run in zero time.  Events
within a tick run in ``(destination id, message kind, responder id,
sequence)`` order, timers after messages.  Episodes (one join or one prune)
are serialized: each runs to quiescence before the next may start.

Trace format: one tab-separated line per delivered message::

    tick  kind  from  to  session  ttl  hops

``ttl`` is ``-`` for kinds that carry none.  Lines starting with ``#`` are
comments.  The cost of an episode is the number of trace lines it adds.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field, replace

from .fabric import ADD_DROP, FabricError, FabricState, WavelengthBusy, release_branch, reserve_branch
from .protocol import (
    KIND_NAMES,
    ClearPending,
    Conflict,
    ConflictRecord,
    ControlMessage,
    Fail,
    Graft,
    Kind,
    NodeRuntime,
    ProtocolParams,
    ProtocolViolation,
    Regime,
    ReleaseSuffix,
    Send,
    SessionState,
    attachable,
    SetTimer,
    dispatch,
    handled_here,
    on_grafted,
    on_timer,
    start_join,
    start_prune,
)
from .topology import Topology, build_splitter_database
from .tree import LightTree, leaf_power

__all__ = [
    "CostLedger",
    "EpisodeResult",
    "NonQuiescent",
    "SnapshotError",
    "Simulation",
    "TRACE_HEADER",
    "snapshot",
    "restore",
]

TRACE_HEADER = "# tick\tkind\tfrom\tto\tsession\tttl\thops"
SNAPSHOT_MAGIC = "SPLITCAST-SNAPSHOT"
SNAPSHOT_VERSION = 1
_TIMER_RANK = len(Kind)


class NonQuiescent(RuntimeError):
    def __init__(self, message: str, residual: list[str]):
        super().__init__(message)
        self.residual = residual


class SnapshotError(ValueError):
    pass


@dataclass
class CostLedger:
    """Control-message link traversals, in total and per message kind."""

    by_kind: dict[str, int] = field(default_factory=lambda: {n: 0 for n in KIND_NAMES.values()})

    @property
    def total(self) -> int:
        return sum(self.by_kind.values())

    def add(self, kind: str, n: int = 1):
        self.by_kind[kind] += n

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger({k: v + other.by_kind[k] for k, v in self.by_kind.items()})

    def __sub__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger({k: v - other.by_kind[k] for k, v in self.by_kind.items()})

    def copy(self) -> "CostLedger":
        return CostLedger(dict(self.by_kind))


@dataclass(frozen=True)
class EpisodeResult:
    episode: int
    stimulus: str
    node: str
    outcome: str
    reason: str | None
    cost: CostLedger
    conflicts: tuple[ConflictRecord, ...] = ()
    ticks: int = 0
    electrical: bool = False

    @property
    def ok(self) -> bool:
        return self.outcome in ("joined", "pruned")


@dataclass
class _SessionInfo:
    source: str
    wavelength: int | None = None


class Simulation:
    """Control-plane simulation of one or more multicast sessions on a topology."""

    def __init__(self, topology: Topology, source: str | None = None,
                 params: ProtocolParams | None = None, session: str = "s0"):
        self.topology = topology
        self.params = (params or ProtocolParams()).resolved(topology)
        knowledge = self.params.regime == Regime.KNOWLEDGE
        self.runtimes: dict[str, NodeRuntime] = {}
        for n in topology.nodes:
            db = build_splitter_database(topology, n.id, self.params.database_k) if knowledge else None
            self.runtimes[n.id] = NodeRuntime(n, FabricState(n.id), db)
        self.sessions: dict[str, _SessionInfo] = {}
        self.tick = 0
        self.episode = 0
        self._seq = 0
        self._dedup = 0
        self._queue: list = []
        self.trace: list[str] = []
        self.ledger = CostLedger()
        self.history: list[EpisodeResult] = []
        if source is not None:
            self.open_session(session, source)

    # -- sessions and views --------------------------------------------------
    def open_session(self, session: str, source: str):
        self.topology.node(source)
        if session in self.sessions:
            raise ValueError(f"session {session!r} already open")
        self.sessions[session] = _SessionInfo(source)
        for rt in self.runtimes.values():
            rt.sessions[session] = SessionState(source)
        self.runtimes[source].sessions[session].on_tree = True

    def on_tree(self, session: str, node: str) -> bool:
        return self.runtimes[node].session(session).on_tree

    def tree_nodes(self, session: str) -> set[str]:
        return {n for n, rt in self.runtimes.items() if rt.sessions[session].on_tree}

    def blocking_nodes(self, session: str) -> set[str]:
        """On-tree nodes where an arriving join would conflict."""
        return {n for n, rt in self.runtimes.items()
                if rt.sessions[session].on_tree and not attachable(rt, rt.sessions[session], self)}

    def new_dedup(self) -> int:
        self._dedup += 1
        return self._dedup

    def cut_point(self, session: str, member: str) -> tuple[str, tuple[str, ...]]:
        """Nearest ancestor that must keep its branch, and the dedicated suffix below it."""
        source = self.sessions[session].source
        suffix = [member]
        node = self.runtimes[member].sessions[session].upstream
        while True:
            ss = self.runtimes[node].sessions[session]
            if node == source or ss.member or len(ss.downstream) > 1:
                return node, tuple(reversed(suffix))
            suffix.append(node)
            node = ss.upstream

    def tree(self, session: str = "s0") -> LightTree:
        info = self.sessions[session]
        branches, members = [], []
        for n, rt in self.runtimes.items():
            ss = rt.sessions[session]
            if ss.on_tree and ss.upstream is not None:
                branches.append((ss.upstream, n))
            if ss.member:
                members.append(n)
        w = info.wavelength
        return LightTree(session, info.source, frozenset(members), frozenset(branches),
                         tuple(sorted((b, w) for b in branches)))

    @property
    def fabrics(self) -> dict[str, FabricState]:
        return {n: rt.fabric for n, rt in self.runtimes.items()}

    def members(self, session: str = "s0") -> list[str]:
        return sorted(n for n, rt in self.runtimes.items() if rt.sessions[session].member)

    def trace_text(self) -> str:
        return "\n".join([TRACE_HEADER, *self.trace]) + "\n"

    # -- episodes ------------------------------------------------------------
    def join(self, member: str, session: str = "s0") -> EpisodeResult:
        return self.run_episode("join", member, session)

    def prune(self, member: str, session: str = "s0") -> EpisodeResult:
        return self.run_episode("prune", member, session)

    def run_episode(self, stimulus: str, node: str, session: str = "s0",
                    max_ticks: int | None = None) -> EpisodeResult:
        if self._queue:
            raise RuntimeError("simulation is not quiescent")
        if session not in self.sessions:
            raise ProtocolViolation(f"unknown session {session!r}")
        rt = self.runtimes[self.topology.node(node).id]
        limit = self.params.max_ticks if max_ticks is None else max_ticks
        saved_runtimes = {n: rt.clone() for n, rt in self.runtimes.items()}
        saved_wavelength = self.sessions[session].wavelength
        cost_before = self.ledger.copy()
        self.episode += 1
        self._type4_sent = 0
        self._failure: str | None = None
        self._conflicts: list[ConflictRecord] = []
        self._electrical = False
        self._deferred: list[tuple[str, Send]] = []
        self._in_flight = 0
        self._joiner = node if stimulus == "join" else None
        start = self.tick

        if stimulus == "join":
            actions = start_join(rt, session, self)
        elif stimulus == "prune":
            actions = start_prune(rt, session, self)
        else:
            raise ValueError(f"unknown stimulus {stimulus!r}")
        self._apply(node, actions)

        while (self._queue or self._deferred) and self._failure is None:
            if self._deferred and not self._in_flight:
                # Confirmations are released one rejoin at a time so that
                # rejoining branches never cross each other in flight.
                self._schedule_send(*self._deferred.pop(0))
                continue
            tick = self._queue[0][0]
            if tick - start > limit:
                residual = [self._describe(e) for e in sorted(self._queue)[:20]]
                self._queue.clear()
                self._restore(saved_runtimes, session, saved_wavelength)
                raise NonQuiescent(f"episode {self.episode} exceeded {limit} ticks", residual)
            event = heapq.heappop(self._queue)
            if not isinstance(event[-1], SetTimer):
                self._in_flight -= 1
            self.tick = tick
            self._execute(event)
        self._queue.clear()
        self._deferred.clear()

        outcome, reason = self._conclude(stimulus, node, session)
        if outcome == "join-failed":
            self._restore(saved_runtimes, session, saved_wavelength)
        self._discard_transients()
        result = EpisodeResult(self.episode, stimulus, node, outcome, reason,
                               self.ledger - cost_before, tuple(self._conflicts),
                               self.tick - start, self._electrical and outcome == "joined")
        self.history.append(result)
        return result

    def _conclude(self, stimulus, node, session):
        ss = self.runtimes[node].sessions[session]
        if stimulus == "prune":
            return "pruned", None
        if self._failure is not None:
            return "join-failed", self._failure
        if not ss.member:
            return "join-failed", "Unresolved"
        self._trim(session)
        threshold = self.params.power_threshold
        if threshold > 0:
            tree = self.tree(session)
            for m in sorted(tree.members):
                if m != tree.source and leaf_power(tree, self.fabrics, m, self.topology) < threshold:
                    return "join-failed", "PowerBudgetExceeded"
        return "joined", None

    def _restore(self, saved, session, wavelength):
        self.runtimes = saved
        self.sessions[session].wavelength = wavelength

    def _discard_transients(self):
        for rt in self.runtimes.values():
            rt.seen.clear()
            rt.floods.clear()
            rt.type1_seen.clear()
            rt.prune_acked.clear()
            for ss in rt.sessions.values():
                ss.pending.clear()
                ss.saved.clear()
                ss.joining = False
                ss.joining_for = None

    # -- event machinery -----------------------------------------------------
    def _push(self, tick, dest, rank, tiebreak, item):
        if not isinstance(item, SetTimer):
            self._in_flight += 1
        self._seq += 1
        heapq.heappush(self._queue, (tick, dest, rank, tiebreak, self._seq, item))

    def _describe(self, event) -> str:
        tick, dest, _, _, _, item = event
        if isinstance(item, SetTimer):
            return f"{tick} timer:{item.kind} at {dest}"
        return f"{tick} {item.name} -> {dest}"

    def _execute(self, event):
        _, dest, _, _, _, item = event
        rt = self.runtimes[dest]
        if isinstance(item, SetTimer):
            self._apply(dest, on_timer(rt, item, self))
            return
        msg: ControlMessage = item
        ttl = "-" if msg.ttl is None else str(msg.ttl)
        self.trace.append(f"{self.tick}\t{msg.name}\t{msg.sender}\t{dest}\t{msg.session}\t{ttl}\t{msg.hops}")
        self.ledger.add(msg.name)
        if handled_here(msg, dest):
            self._apply(dest, dispatch(rt, msg, self))
        else:
            nxt = self.topology.next_hop(dest, msg.target)
            self._apply(dest, [Send(replace(msg, sender=dest), nxt)])

    def _apply(self, here: str, actions: list):
        for act in actions:
            if self._failure is not None:
                return
            if isinstance(act, Send):
                self._schedule_send(here, act)
            elif isinstance(act, Graft):
                try:
                    follow = self._graft(act)
                except FabricError as exc:
                    self._failure = type(exc).__name__
                    return
                for node, acts in follow:
                    for a in acts:
                        if isinstance(a, Send) and a.message.kind == Kind.TYPE2:
                            self._deferred.append((node, a))
                        else:
                            self._apply(node, [a])
            elif isinstance(act, ClearPending):
                for rt in self.runtimes.values():
                    rt.sessions[act.session].pending.discard(act.origin)
            elif isinstance(act, ReleaseSuffix):
                self._release_suffix(act)
            elif isinstance(act, SetTimer):
                self._push(self.tick + act.delay, here, _TIMER_RANK, "", act)
            elif isinstance(act, Fail):
                self._failure = act.reason
            elif isinstance(act, Conflict):
                self._conflicts.append(act.record)
            else:  # pragma: no cover
                raise TypeError(f"unknown action {act!r}")

    def _schedule_send(self, here: str, act: Send):
        msg = act.message
        if act.to not in self.topology.neighbors(here):
            raise ProtocolViolation(f"{here} cannot send to non-neighbor {act.to}")
        if msg.kind == Kind.TYPE4:
            if self._type4_sent >= self.params.type4_cap:
                return
            self._type4_sent += 1
        msg = replace(msg, sender=here, hops=msg.hops + 1)
        tiebreak = msg.branch_node if msg.kind == Kind.TYPE4_ACK else ""
        self._push(self.tick + 1, act.to, int(msg.kind), tiebreak, msg)

    def _in_port(self, node: str, upstream: str | None) -> int:
        return ADD_DROP if upstream is None else self.topology.port(node, upstream)

    def _graft(self, g: Graft):
        path, sid = g.path, g.session
        info = self.sessions[sid]
        top = self.topology
        k = len(path) - 1
        w = info.wavelength
        if w is None:
            w = next((lam for lam in range(top.wavelengths_per_fiber)
                      if all(self.runtimes[path[i]].fabric.driver_of(top.port(path[i], path[i - 1]), lam) is None
                             for i in range(1, k + 1))), None)
            if w is None:
                raise WavelengthBusy(f"no wavelength free along {'-'.join(path)}")
        for i in range(k, 0, -1):
            node, child = path[i], path[i - 1]
            rt = self.runtimes[node]
            up = rt.sessions[sid].upstream if i == k else path[i + 1]
            # The source transmits electrically and may feed any number of outputs.
            electrical = (g.electrical and i == k) or node == info.source
            rt.fabric = reserve_branch(rt.fabric, rt.descriptor, self._in_port(node, up), w,
                                       top.port(node, child), top.wavelengths_per_fiber, electrical)
            if electrical and node != info.source:
                self._electrical = True
        info.wavelength = w
        for i in range(k):
            ss = self.runtimes[path[i]].sessions[sid]
            ss.on_tree = True
            ss.upstream = path[i + 1]
            if i > 0:
                ss.downstream = sorted(set(ss.downstream) | {path[i - 1]})
        head = self.runtimes[path[k]].sessions[sid]
        head.downstream = sorted(set(head.downstream) | {path[k - 1]})
        origin = self.runtimes[path[0]].sessions[sid]
        origin.joining = False
        origin.joining_for = None
        # The joiner may also be reached as an intermediate hop of a helper's rejoin.
        if self._joiner in path[:k]:
            self.runtimes[self._joiner].sessions[sid].member = True
        for rt in self.runtimes.values():
            rt.sessions[sid].pending.discard(path[0])
        follow = []
        for node in path[:k]:
            rt = self.runtimes[node]
            if rt.sessions[sid].saved:
                follow.append((node, on_grafted(rt, sid, g.tried, self)))
        return follow

    def _release_suffix(self, act: ReleaseSuffix):
        sid = act.session
        chain, node = [], act.member
        while node != act.cut:
            chain.append(node)
            node = self.runtimes[node].sessions[sid].upstream
        self._release_chain(sid, chain, act.cut)

    def _release_chain(self, sid: str, chain: list[str], cut: str):
        w = self.sessions[sid].wavelength
        for node in chain:
            rt = self.runtimes[node]
            ss = rt.sessions[sid]
            in_port = self._in_port(node, ss.upstream)
            for child in ss.downstream:
                rt.fabric = release_branch(rt.fabric, in_port, w, self.topology.port(node, child))
            ss.on_tree = ss.member = False
            ss.upstream = None
            ss.downstream = []
        rt = self.runtimes[cut]
        ss = rt.sessions[sid]
        head = chain[-1]
        rt.fabric = release_branch(rt.fabric, self._in_port(cut, ss.upstream), w, self.topology.port(cut, head))
        ss.downstream = [c for c in ss.downstream if c != head]
        if not any(r.sessions[sid].on_tree and r.sessions[sid].upstream for r in self.runtimes.values()):
            self.sessions[sid].wavelength = None

    def _trim(self, sid: str) -> int:
        """Release non-member leaves left behind by redirected joins."""
        source = self.sessions[sid].source
        trimmed = 0
        while True:
            leaves = [n for n, rt in self.runtimes.items()
                      if n != source and rt.sessions[sid].on_tree
                      and not rt.sessions[sid].downstream and not rt.sessions[sid].member]
            if not leaves:
                return trimmed
            for leaf in leaves:
                self._release_chain(sid, [leaf], self.runtimes[leaf].sessions[sid].upstream)
                trimmed += 1

    # -- snapshots -----------------------------------------------------------
    def snapshot(self) -> str:
        return snapshot(self)


def snapshot(sim: Simulation) -> str:
    if sim._queue:
        raise SnapshotError("snapshot requires a quiescent simulation")
    body = {
        "version": SNAPSHOT_VERSION,
        "topology_hash": sim.topology.content_hash(),
        "params": asdict(sim.params),
        "sessions": {k: {"source": v.source, "wavelength": v.wavelength} for k, v in sorted(sim.sessions.items())},
        "tick": sim.tick,
        "episode": sim.episode,
        "seq": sim._seq,
        "dedup": sim._dedup,
        "ledger": sim.ledger.by_kind,
        "runtimes": {n: rt.to_dict() for n, rt in sorted(sim.runtimes.items())},
    }
    header = f"{SNAPSHOT_MAGIC} v{SNAPSHOT_VERSION} {body['topology_hash']}"
    return header + "\n" + json.dumps(body, sort_keys=True, indent=1) + "\n"


def restore(text: str, topology: Topology) -> Simulation:
    header, _, rest = text.partition("\n")
    parts = header.split()
    if len(parts) != 3 or parts[0] != SNAPSHOT_MAGIC or parts[1] != f"v{SNAPSHOT_VERSION}":
        raise SnapshotError(f"bad snapshot header {header!r}")
    if parts[2] != topology.content_hash():
        raise SnapshotError("snapshot was taken on a different topology")
    try:
        body = json.loads(rest)
        params = ProtocolParams(**body["params"])
        sim = Simulation(topology, None, params)
        for sid, info in body["sessions"].items():
            sim.sessions[sid] = _SessionInfo(info["source"], info["wavelength"])
        sim.tick, sim.episode = body["tick"], body["episode"]
        sim._seq, sim._dedup = body["seq"], body["dedup"]
        sim.ledger = CostLedger(dict(body["ledger"]))
        if set(body["runtimes"]) != set(sim.runtimes):
            raise SnapshotError("snapshot node set does not match topology")
        sim.runtimes = {n: NodeRuntime.from_dict(d, topology.node(n)) for n, d in body["runtimes"].items()}
    except SnapshotError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc}") from None
    return sim
