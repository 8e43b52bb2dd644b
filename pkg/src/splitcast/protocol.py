"""Join / prune signaling for light-trees with sparse light splitting.

Every handler takes the receiving node's :class:`NodeRuntime`, the delivered
message and a read-only :class:`Context`, updates only that node's runtime,
and returns a list of actions for the engine to apply.  Actions that touch
several nodes at once (grafting a confirmed path, clearing stale pending
marks, releasing a pruned suffix) are applied by the engine and carry no
message cost.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Mapping, Protocol

from .fabric import ADD_DROP, FabricState
from .topology import (
    NodeDescriptor, SplitterDatabase, Topology, TopologyError, build_splitter_database, shortest_path,
)
from .tree import LightTree

__all__ = [
    "Kind",
    "KIND_NAMES",
    "Regime",
    "ProtocolParams",
    "ControlMessage",
    "ProtocolViolation",
    "SessionState",
    "NodeRuntime",
    "ConflictRecord",
    "Send",
    "Graft",
    "ClearPending",
    "ReleaseSuffix",
    "SetTimer",
    "Fail",
    "Conflict",
    "Context",
    "start_join",
    "start_prune",
    "on_join_request",
    "on_type1",
    "on_type2",
    "on_type3",
    "on_type4",
    "on_type4_ack",
    "on_prune",
    "on_prune_ack",
    "on_timer",
    "on_grafted",
    "dispatch",
    "ValidationReport",
    "validate_tree",
]


class Kind(IntEnum):
    JOIN = 0
    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3
    TYPE4 = 4
    TYPE4_ACK = 5
    PRUNE = 6
    PRUNE_ACK = 7


KIND_NAMES = {
    Kind.JOIN: "JoinRequest",
    Kind.TYPE1: "Type1",
    Kind.TYPE2: "Type2",
    Kind.TYPE3: "Type3",
    Kind.TYPE4: "Type4",
    Kind.TYPE4_ACK: "Type4Ack",
    Kind.PRUNE: "Prune",
    Kind.PRUNE_ACK: "PruneAck",
}


class Regime:
    KNOWLEDGE = "knowledge"
    NO_KNOWLEDGE = "no-knowledge"
    ALL = (KNOWLEDGE, NO_KNOWLEDGE)


class ProtocolViolation(RuntimeError):
    """A message reached a node that must never receive it."""


@dataclass(frozen=True)
class ProtocolParams:
    """Tunables; ``None`` means derive from the topology diameter.

    type3_ttl defaults to ceil(diameter / 2), type4_ttl to the diameter,
    type4_cap to 2 * |links| transmissions per flood and prune_timeout to
    4 * diameter ticks.
    """

    regime: str = Regime.KNOWLEDGE
    type3_ttl: int | None = None
    type4_ttl: int | None = None
    type4_cap: int | None = None
    prune_timeout: int | None = None
    database_k: int | None = None
    oeo_fallback: bool = False
    power_threshold: float = 0.0
    max_ticks: int = 100_000

    def __post_init__(self):
        if self.regime not in Regime.ALL:
            raise ValueError(f"unknown regime {self.regime!r}")
        for name in ("type3_ttl", "type4_ttl", "type4_cap", "prune_timeout", "database_k"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")

    def resolved(self, topology: Topology) -> "ProtocolParams":
        d = topology.diameter
        return replace(
            self,
            type3_ttl=-(-d // 2) if self.type3_ttl is None else self.type3_ttl,
            type4_ttl=d if self.type4_ttl is None else self.type4_ttl,
            type4_cap=2 * len(topology.links) if self.type4_cap is None else self.type4_cap,
            prune_timeout=4 * d if self.prune_timeout is None else self.prune_timeout,
        )


@dataclass(frozen=True)
class ControlMessage:
    kind: Kind
    session: str
    origin: str
    source: str
    target: str | None
    sender: str = ""
    payload: "ControlMessage | None" = None
    ttl: int | None = None
    dedup: int | None = None
    hops: int = 0
    route: tuple[str, ...] | None = None
    path: tuple[str, ...] = ()
    tried: tuple[str, ...] = ()
    on_behalf: str | None = None
    branch_node: str | None = None
    conflict: str | None = None
    expired: bool = False
    flood: bool = False
    episode: int = 0

    def __post_init__(self):
        if self.kind == Kind.TYPE1 and (self.payload is None or self.payload.kind != Kind.JOIN):
            raise ValueError("Type1 must encapsulate a JoinRequest")
        if self.kind in (Kind.TYPE3, Kind.TYPE4):
            if self.ttl is None or self.ttl < 0:
                raise ValueError(f"{KIND_NAMES[self.kind]} needs a nonnegative ttl")
        elif self.ttl is not None:
            raise ValueError(f"{KIND_NAMES[self.kind]} carries no ttl")

    @property
    def name(self) -> str:
        return KIND_NAMES[self.kind]

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k == "payload":
                v = v.to_dict() if v is not None else None
            elif k == "kind":
                v = int(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[k] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ControlMessage":
        d = dict(d)
        d["kind"] = Kind(d["kind"])
        if d["payload"] is not None:
            d["payload"] = cls.from_dict(d["payload"])
        for k in ("route", "path", "tried"):
            if d[k] is not None:
                d[k] = tuple(d[k])
        return cls(**d)


# -- runtime -------------------------------------------------------------------

@dataclass
class SessionState:
    source: str
    on_tree: bool = False
    member: bool = False
    upstream: str | None = None
    downstream: list[str] = field(default_factory=list)
    pending: set[str] = field(default_factory=set)
    joining: bool = False
    joining_for: str | None = None
    saved: list[tuple[str, str | None]] = field(default_factory=list)

    @property
    def branching(self) -> bool:
        return self.on_tree and len(self.downstream) > 1

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "on_tree": self.on_tree,
            "member": self.member,
            "upstream": self.upstream,
            "downstream": list(self.downstream),
            "pending": sorted(self.pending),
            "joining": self.joining,
            "joining_for": self.joining_for,
            "saved": [list(s) for s in self.saved],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionState":
        d = dict(d)
        d["pending"] = set(d["pending"])
        d["saved"] = [tuple(s) for s in d["saved"]]
        return cls(**d)


@dataclass
class FloodState:
    payload: ControlMessage
    tried: tuple[str, ...]
    done: bool = False


@dataclass
class NodeRuntime:
    descriptor: NodeDescriptor
    fabric: FabricState
    database: SplitterDatabase | None = None
    sessions: dict[str, SessionState] = field(default_factory=dict)
    seen: set[int] = field(default_factory=set)
    floods: dict[int, FloodState] = field(default_factory=dict)
    type1_seen: set[tuple[str, str, int]] = field(default_factory=set)
    prune_acked: set[tuple[str, str, int]] = field(default_factory=set)

    @property
    def id(self) -> str:
        return self.descriptor.id

    def clone(self) -> "NodeRuntime":
        """Copy of the mutable state; descriptor, fabric and database are immutable."""
        sessions = {k: replace(v, downstream=list(v.downstream), pending=set(v.pending),
                               saved=list(v.saved)) for k, v in self.sessions.items()}
        return NodeRuntime(self.descriptor, self.fabric, self.database, sessions, set(self.seen),
                           dict(self.floods), set(self.type1_seen), set(self.prune_acked))

    def session(self, sid: str) -> SessionState:
        try:
            return self.sessions[sid]
        except KeyError:
            raise ProtocolViolation(f"node {self.id}: unknown session {sid!r}") from None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "fabric": self.fabric.to_dict(),
            "database": None if self.database is None else {
                "nearest": [list(e) for e in self.database.nearest],
                "truncated": self.database.truncated,
            },
            "sessions": {k: v.to_dict() for k, v in sorted(self.sessions.items())},
            "seen": sorted(self.seen),
            "floods": {str(k): {"payload": v.payload.to_dict(), "tried": list(v.tried), "done": v.done}
                       for k, v in sorted(self.floods.items())},
            "type1_seen": sorted([list(k) for k in self.type1_seen]),
            "prune_acked": sorted([list(k) for k in self.prune_acked]),
        }

    @classmethod
    def from_dict(cls, d: dict, descriptor: NodeDescriptor) -> "NodeRuntime":
        db = d["database"]
        return cls(
            descriptor,
            FabricState.from_dict(d["fabric"]),
            None if db is None else SplitterDatabase(
                descriptor.id, tuple((s, n) for s, n in db["nearest"]), db["truncated"]),
            {k: SessionState.from_dict(v) for k, v in d["sessions"].items()},
            set(d["seen"]),
            {int(k): FloodState(ControlMessage.from_dict(v["payload"]), tuple(v["tried"]), v["done"])
             for k, v in d["floods"].items()},
            {tuple(k) for k in d["type1_seen"]},
            {tuple(k) for k in d["prune_acked"]},
        )


@dataclass(frozen=True)
class ConflictRecord:
    """One branching conflict: where, for whom, and how a splitter relates to the source path."""

    episode: int
    node: str
    origin: str
    nearest: str | None
    first_on_path: str | None
    label: str  # "on-path", "off-path" or "mixed"


# -- actions -------------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    message: ControlMessage
    to: str


@dataclass(frozen=True)
class Graft:
    session: str
    path: tuple[str, ...]
    on_behalf: str | None = None
    electrical: bool = False
    tried: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClearPending:
    session: str
    origin: str


@dataclass(frozen=True)
class ReleaseSuffix:
    session: str
    member: str
    cut: str


@dataclass(frozen=True)
class SetTimer:
    delay: int
    kind: str
    session: str
    subject: str
    dedup: int | None = None
    episode: int = 0


@dataclass(frozen=True)
class Fail:
    reason: str


@dataclass(frozen=True)
class Conflict:
    record: ConflictRecord


class Context(Protocol):
    """Read-only view handlers may consult."""

    topology: Topology
    params: ProtocolParams
    episode: int

    def on_tree(self, session: str, node: str) -> bool: ...

    def tree_nodes(self, session: str) -> set[str]: ...

    def new_dedup(self) -> int: ...

    def cut_point(self, session: str, member: str) -> tuple[str, tuple[str, ...]]: ...

    def blocking_nodes(self, session: str) -> set[str]: ...


# -- helpers -------------------------------------------------------------------

def _send(msg: ControlMessage, here: str, ctx: Context) -> Send:
    return Send(replace(msg, sender=here), ctx.topology.next_hop(here, msg.target))


def attachable(rt: NodeRuntime, ss: SessionState, ctx: Context) -> bool:
    """Whether a join arriving at this on-tree node can graft here."""
    if rt.descriptor.is_splitter or not ss.downstream or rt.id == ss.source:
        return True
    in_port = ADD_DROP if ss.upstream is None else ctx.topology.port(rt.id, ss.upstream)
    return any(key[0] == in_port for key in rt.fabric.electrical)


def classify_conflict(
    topology: Topology, node: str, source: str, tried: Iterable[str],
    type3_ttl: int, database: SplitterDatabase | None = None,
) -> tuple[str | None, str | None, str]:
    """Relate the nearest untried splitter to the Type3 search along the source route.

    Returns ``(nearest, first_on_path, label)``.  A Type3 sent with ttl ``t``
    can be absorbed up to ``t + 1`` hops away.
    """
    skip = set(tried)
    db = database or build_db(topology, node)
    head = db.closest(skip)
    nearest = head[0] if head else None
    route = topology.route(node, source)[1:type3_ttl + 2]
    first = next((v for v in route if topology.node(v).is_splitter and v not in skip), None)
    if first is None:
        label = "off-path"
    elif first == nearest:
        label = "on-path"
    else:
        label = "mixed"
    return nearest, first, label


def build_db(topology: Topology, node: str) -> SplitterDatabase:
    return build_splitter_database(topology, node)


def _no_splitter(join: ControlMessage, here: str, ctx: Context) -> list:
    if ctx.params.oeo_fallback:
        return [Graft(join.session, join.path, join.on_behalf, electrical=True, tried=join.tried)]
    return [Fail("NoSplitterReachable")]


def _resolve_conflict(rt: NodeRuntime, join: ControlMessage, ctx: Context) -> list:
    here = rt.id
    nearest, first, label = classify_conflict(
        ctx.topology, here, join.source, join.tried, ctx.params.type3_ttl, rt.database)
    actions: list = [Conflict(ConflictRecord(ctx.episode, here, join.origin, nearest, first, label))]
    if ctx.params.regime == Regime.KNOWLEDGE:
        entry = rt.database.closest(join.tried) if rt.database else None
        if entry is None:
            return actions + _no_splitter(join, here, ctx)
        splitter = entry[0]
        t1 = ControlMessage(Kind.TYPE1, join.session, join.origin, join.source, splitter,
                            payload=join, tried=join.tried + (splitter,), conflict=here,
                            episode=ctx.episode)
        actions.append(_send(t1, here, ctx))
        return actions
    if here == join.source:
        return actions + _start_flood(rt, join, ctx)
    t3 = ControlMessage(Kind.TYPE3, join.session, join.origin, join.source, join.source,
                        payload=join, ttl=ctx.params.type3_ttl, tried=join.tried,
                        conflict=here, episode=ctx.episode)
    actions.append(_send(t3, here, ctx))
    return actions


def _start_flood(rt: NodeRuntime, join: ControlMessage, ctx: Context) -> list:
    dedup = ctx.new_dedup()
    rt.seen.add(dedup)
    rt.floods[dedup] = FloodState(join, join.tried)
    ttl = ctx.params.type4_ttl
    actions: list = []
    for nb in ctx.topology.neighbors(rt.id):
        msg = ControlMessage(Kind.TYPE4, join.session, join.origin, join.source, None,
                             sender=rt.id, ttl=ttl, dedup=dedup, tried=join.tried,
                             conflict=rt.id, episode=ctx.episode)
        actions.append(Send(msg, nb))
    wait = ttl + 1 + ctx.topology.diameter + 1
    actions.append(SetTimer(wait, "type4", join.session, join.origin, dedup, ctx.episode))
    return actions


def _engage(rt: NodeRuntime, join: ControlMessage, tried: tuple[str, ...], ctx: Context) -> list:
    """A splitter takes over a conflicted join (Type1 receipt or Type3 absorption)."""
    sid = join.session
    key = (sid, join.origin, ctx.episode)
    if key in rt.type1_seen:
        return []
    rt.type1_seen.add(key)
    ss = rt.session(sid)
    here = rt.id
    if ss.on_tree:
        t2 = ControlMessage(Kind.TYPE2, sid, join.origin, join.source, join.origin,
                            branch_node=here, tried=tried, on_behalf=join.on_behalf,
                            episode=ctx.episode)
        return [_send(t2, here, ctx)]
    if here == join.origin:
        # The conflicted joiner is itself a splitter: retry its own join.
        retry = ControlMessage(Kind.JOIN, sid, here, join.source, join.source,
                               path=(here,), tried=tried, on_behalf=join.on_behalf,
                               episode=ctx.episode)
        return [ClearPending(sid, here), _send(retry, here, ctx)]
    ss.saved.append((join.origin, join.on_behalf))
    ss.joining = True
    ss.joining_for = join.origin
    own = ControlMessage(Kind.JOIN, sid, here, join.source, join.source, path=(here,),
                         tried=tried, on_behalf=join.origin, episode=ctx.episode)
    return [_send(own, here, ctx)]


# -- handlers ------------------------------------------------------------------

def start_join(rt: NodeRuntime, session: str, ctx: Context) -> list:
    """A member issues a JoinRequest toward the session source."""
    ss = rt.session(session)
    if ss.on_tree:
        ss.member = True
        return []
    ss.joining = True
    ss.joining_for = None
    msg = ControlMessage(Kind.JOIN, session, rt.id, ss.source, ss.source, path=(rt.id,),
                         episode=ctx.episode)
    return [_send(msg, rt.id, ctx)]


def on_join_request(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    ss = rt.session(msg.session)
    here = rt.id
    join = replace(msg, path=msg.path + (here,))
    if ss.on_tree:
        if attachable(rt, ss, ctx):
            return [Graft(msg.session, join.path, msg.on_behalf, tried=msg.tried)]
        return _resolve_conflict(rt, join, ctx)
    if here == msg.target:
        return [Fail("TargetOffTree")]
    ss.pending.add(msg.origin)
    if msg.route is not None:
        nxt = msg.route[msg.route.index(here) + 1]
        return [Send(replace(join, sender=here), nxt)]
    return [_send(join, here, ctx)]


def on_type1(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    if not rt.descriptor.is_splitter:
        raise ProtocolViolation(f"Type1 delivered to non-splitter {rt.id}")
    return _engage(rt, msg.payload, msg.tried, ctx)


def on_type2(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    ss = rt.session(msg.session)
    if ss.on_tree:
        # Stale: a chain of engaged splitters folded back onto an already grafted node.
        return []
    if not ss.joining:
        raise ProtocolViolation(f"Type2 delivered to {rt.id}, which is not joining {msg.session}")
    here, target = rt.id, msg.branch_node
    # Prefer a route that meets the tree only where a graft is possible;
    # otherwise take the plain shortest path and resolve any new conflict.
    avoid = ctx.blocking_nodes(msg.session) - {target}
    try:
        route = shortest_path(ctx.topology, target, here, avoid=avoid)
    except TopologyError:
        route = shortest_path(ctx.topology, target, here)
    route.reverse()
    join = ControlMessage(Kind.JOIN, msg.session, here, ss.source, target, sender=here,
                          route=tuple(route), path=(here,), tried=msg.tried,
                          on_behalf=ss.joining_for, episode=ctx.episode)
    return [ClearPending(msg.session, here), Send(join, route[1])]


def on_type3(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    here = rt.id
    if msg.expired:
        # Expiry notice back at the conflict node: escalate to flooding.
        return _start_flood(rt, msg.payload, ctx)
    if rt.descriptor.is_splitter and here not in msg.tried:
        return _engage(rt, msg.payload, msg.tried + (here,), ctx)
    if here == msg.target or msg.ttl == 0:
        notice = replace(msg, expired=True, target=msg.conflict, ttl=0)
        return [_send(notice, here, ctx)]
    return [_send(replace(msg, ttl=msg.ttl - 1), here, ctx)]


def on_type4(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    if msg.dedup in rt.seen:
        return []
    rt.seen.add(msg.dedup)
    here = rt.id
    actions: list = []
    if rt.descriptor.is_splitter and here not in msg.tried:
        ack = ControlMessage(Kind.TYPE4_ACK, msg.session, msg.origin, msg.source, msg.conflict,
                             dedup=msg.dedup, branch_node=here, conflict=msg.conflict,
                             episode=ctx.episode)
        actions.append(_send(ack, here, ctx))
    if msg.ttl > 0:
        for nb in ctx.topology.neighbors(here):
            if nb != msg.sender:
                actions.append(Send(replace(msg, ttl=msg.ttl - 1, sender=here), nb))
    return actions


def on_type4_ack(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    flood = rt.floods.get(msg.dedup)
    if flood is None or flood.done or msg.branch_node in flood.tried:
        return []
    flood.done = True
    join, splitter = flood.payload, msg.branch_node
    t1 = ControlMessage(Kind.TYPE1, join.session, join.origin, join.source, splitter,
                        payload=join, tried=flood.tried + (splitter,), conflict=rt.id,
                        episode=ctx.episode)
    return [_send(t1, rt.id, ctx)]


def start_prune(rt: NodeRuntime, session: str, ctx: Context) -> list:
    ss = rt.session(session)
    if not ss.member:
        raise ProtocolViolation(f"prune from non-member {rt.id}")
    ss.member = False
    if ss.downstream or rt.id == ss.source:
        return []
    cut, suffix = ctx.cut_point(session, rt.id)
    msg = ControlMessage(Kind.PRUNE, session, rt.id, ss.source, ss.source,
                         route=suffix, branch_node=cut, episode=ctx.episode)
    return [_send(msg, rt.id, ctx)]


def on_prune(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    here = rt.id
    ss = rt.session(msg.session)
    cut = msg.branch_node
    if msg.flood:
        actions: list = []
        children = list(ss.downstream)
        if here == cut:
            actions.append(ReleaseSuffix(msg.session, msg.origin, cut))
            ack = ControlMessage(Kind.PRUNE_ACK, msg.session, msg.origin, msg.source, msg.source,
                                 branch_node=here, episode=ctx.episode)
            actions.append(_send(ack, here, ctx))
            children = [c for c in children if c != msg.route[0]]
        for c in children:
            actions.append(Send(replace(msg, sender=here), c))
        return actions
    if here == cut and here != msg.source:
        return [ReleaseSuffix(msg.session, msg.origin, cut)]
    if here == msg.source:
        if cut == here and len(ss.downstream) == 1:
            return [ReleaseSuffix(msg.session, msg.origin, cut)]
        actions = [Send(replace(msg, flood=True, sender=here), c) for c in ss.downstream]
        actions.append(SetTimer(ctx.params.prune_timeout, "prune", msg.session, msg.origin,
                                episode=ctx.episode))
        return actions
    return [_send(msg, here, ctx)]


def on_prune_ack(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    rt.prune_acked.add((msg.session, msg.origin, ctx.episode))
    return []


def on_timer(rt: NodeRuntime, timer: SetTimer, ctx: Context) -> list:
    if timer.kind == "type4":
        flood = rt.floods.get(timer.dedup)
        if flood is None or flood.done:
            return []
        flood.done = True
        return _no_splitter(flood.payload, rt.id, ctx)
    if timer.kind == "prune":
        if (timer.session, timer.subject, timer.episode) in rt.prune_acked:
            return []
        cut, _ = ctx.cut_point(timer.session, timer.subject)
        if cut == rt.id:
            return [ReleaseSuffix(timer.session, timer.subject, cut)]
        return []
    raise ValueError(f"unknown timer {timer.kind!r}")


def on_grafted(rt: NodeRuntime, session: str, tried: tuple[str, ...], ctx: Context) -> list:
    """A splitter that joined on a member's behalf is now on the tree: redirect the member."""
    ss = rt.session(session)
    saved, ss.saved = ss.saved, []
    actions = []
    for member, on_behalf in saved:
        t2 = ControlMessage(Kind.TYPE2, session, member, ss.source, member,
                            branch_node=rt.id, on_behalf=on_behalf, tried=tried,
                            episode=ctx.episode)
        actions.append(_send(t2, rt.id, ctx))
    return actions


# Kinds handled at every node they pass; the rest only at their target.
TRANSIT_HANDLED = frozenset({Kind.JOIN, Kind.TYPE4, Kind.PRUNE})

_HANDLERS = {
    Kind.JOIN: on_join_request,
    Kind.TYPE1: on_type1,
    Kind.TYPE2: on_type2,
    Kind.TYPE3: on_type3,
    Kind.TYPE4: on_type4,
    Kind.TYPE4_ACK: on_type4_ack,
    Kind.PRUNE: on_prune,
    Kind.PRUNE_ACK: on_prune_ack,
}


def handled_here(msg: ControlMessage, node: str) -> bool:
    if msg.kind in TRANSIT_HANDLED:
        return True
    if msg.kind == Kind.TYPE3 and not msg.expired:
        return True
    return msg.target == node


def dispatch(rt: NodeRuntime, msg: ControlMessage, ctx: Context) -> list:
    return _HANDLERS[msg.kind](rt, msg, ctx)


# -- validation ----------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            lines = ["valid"]
        else:
            lines = [f"violation: {v}" for v in self.violations]
        return "\n".join(lines + [f"note: {n}" for n in self.notes])


def validate_tree(tree: LightTree, fabrics: Mapping[str, FabricState], topology: Topology) -> ValidationReport:
    """Structural checks on a quiescent tree against its fabric reservations."""
    rep = ValidationReport()
    parent_of: dict[str, str] = {}
    for p, c in sorted(tree.branches):
        if (min(p, c), max(p, c)) not in set(topology.links):
            rep.violations.append(f"branch {p}->{c} is not a fiber link")
        if c in parent_of:
            rep.violations.append(f"{c} has in-degree > 1 ({parent_of[c]}, {p})")
        parent_of[c] = p
    if tree.source in parent_of:
        rep.violations.append(f"source {tree.source} has an upstream branch")
    for node in sorted(tree.nodes):
        seen, cur = {node}, node
        while cur != tree.source:
            cur = parent_of.get(cur)
            if cur is None:
                rep.violations.append(f"{node} is not connected to the source")
                break
            if cur in seen:
                rep.violations.append(f"cycle through {node}")
                break
            seen.add(cur)
    for m in sorted(tree.members):
        if m != tree.source and m not in parent_of:
            rep.violations.append(f"member {m} is not on the tree")

    wavelengths = dict(tree.wavelengths)
    if len(set(wavelengths.values())) > 1:
        rep.violations.append(f"wavelength changes along the tree: {sorted(set(wavelengths.values()))}")

    expected: dict[str, dict[tuple[int, int], set[int]]] = {}
    for p, c in tree.branches:
        w = wavelengths.get((p, c))
        if w is None:
            rep.violations.append(f"branch {p}->{c} has no wavelength")
            continue
        up = parent_of.get(p)
        in_port = ADD_DROP if up is None else topology.port(p, up)
        expected.setdefault(p, {}).setdefault((in_port, w), set()).add(topology.port(p, c))
    # Reservations on other wavelengths belong to other sessions; an empty
    # tree owns no wavelength, so anything left behind is an orphan.
    tree_w = set(wavelengths.values())
    for node in sorted(set(expected) | set(fabrics)):
        fabric = fabrics.get(node)
        have = {k: set(v) for k, v in (fabric.branches.items() if fabric else ())
                if not tree_w or k[1] in tree_w}
        want = expected.get(node, {})
        for key in sorted(set(have) | set(want)):
            h, w = have.get(key, set()), want.get(key, set())
            for port in sorted(h - w):
                rep.violations.append(f"orphan reservation at {node}: {key} -> port {port}")
            for port in sorted(w - h):
                rep.violations.append(f"missing reservation at {node}: {key} -> port {port}")
        for key, outs in want.items():
            if len(outs) > 1:
                desc = topology.node(node)
                if node == tree.source:
                    pass
                elif fabric is not None and key in fabric.electrical:
                    rep.notes.append(f"electrical (O/E/O) duplication at {node}")
                elif not desc.is_splitter:
                    rep.violations.append(f"branching at non-splitter {node} (out-degree {len(outs)})")
                elif len(outs) > desc.max_fanout:
                    rep.violations.append(f"fanout {len(outs)} exceeds max_fanout at {node}")
    return rep
