"""Per-node optical fabric: wavelength branch reservations and split power.

A reservation key is ``(input port, wavelength)``; its value is the ordered
set of output ports the signal is switched (and, at an MC-OXC, split) onto.
Port ``ADD_DROP`` is the node's local add/drop port, used as the input of
the session source.  Local drops at members are taps and never count as
fabric outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .topology import NodeDescriptor

__all__ = [
    "ADD_DROP",
    "FabricError",
    "SplitterUnavailable",
    "FanoutExceeded",
    "WavelengthBusy",
    "UnknownBranch",
    "FabricState",
    "SadGeometry",
    "sad_geometry",
    "reserve_branch",
    "release_branch",
]

ADD_DROP = -1


class FabricError(Exception):
    """Base class for reservation failures."""


class SplitterUnavailable(FabricError):
    """A plain OXC was asked to drive a second output."""


class FanoutExceeded(FabricError):
    pass


class WavelengthBusy(FabricError):
    pass


class UnknownBranch(FabricError, KeyError):
    pass


Key = tuple[int, int]


@dataclass(frozen=True)
class FabricState:
    node: str
    branches: Mapping[Key, tuple[int, ...]] = field(default_factory=dict)
    electrical: frozenset[Key] = frozenset()

    def outputs(self, in_port: int, wavelength: int) -> tuple[int, ...]:
        return self.branches.get((in_port, wavelength), ())

    def fanout(self, in_port: int, wavelength: int) -> int:
        return len(self.outputs(in_port, wavelength))

    def power_factors(self, in_port: int, wavelength: int) -> dict[int, Fraction]:
        """Output power per port for unit input; regenerated keys give full power."""
        outs = self.outputs(in_port, wavelength)
        if (in_port, wavelength) in self.electrical:
            return {p: Fraction(1) for p in outs}
        return {p: Fraction(1, len(outs)) for p in outs}

    def driver_of(self, out_port: int, wavelength: int) -> Key | None:
        for key, outs in self.branches.items():
            if key[1] == wavelength and out_port in outs:
                return key
        return None

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "branches": [[k[0], k[1], list(v)] for k, v in sorted(self.branches.items())],
            "electrical": sorted([list(k) for k in self.electrical]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FabricState":
        return cls(
            data["node"],
            {(a, b): tuple(outs) for a, b, outs in data["branches"]},
            frozenset((a, b) for a, b in data["electrical"]),
        )


@dataclass(frozen=True)
class SadGeometry:
    """Component counts of a P x P MC-OXC built from splitter-and-delivery planes."""

    port_count: int
    wavelengths: int
    splitters: int
    gates: int
    switching_elements: int
    sad_planes: int
    demultiplexers: int
    multiplexers: int


def sad_geometry(port_count: int, wavelengths: int) -> SadGeometry:
    if port_count < 1 or wavelengths < 1:
        raise ValueError("port count and wavelength count must be positive")
    p = port_count
    return SadGeometry(p, wavelengths, p, p * p, p * p, wavelengths, p, p)


def _check_port(node: NodeDescriptor, port: int, allow_add_drop: bool = False):
    if allow_add_drop and port == ADD_DROP:
        return
    if not 0 <= port < node.port_count:
        raise ValueError(f"node {node.id}: port {port} outside [0, {node.port_count})")


def reserve_branch(
    f: FabricState,
    node: NodeDescriptor,
    in_port: int,
    wavelength: int,
    out_port: int,
    wavelengths: int | None = None,
    electrical: bool = False,
) -> FabricState:
    """Return ``f`` with ``out_port`` added to the ``(in_port, wavelength)`` key.

    ``electrical=True`` permits O/E/O duplication at a plain OXC; such keys
    are flagged and bypass the optical fanout limits.
    """
    _check_port(node, in_port, allow_add_drop=True)
    _check_port(node, out_port)
    if wavelength < 0 or (wavelengths is not None and wavelength >= wavelengths):
        raise ValueError(f"wavelength {wavelength} out of range")
    key = (in_port, wavelength)
    outs = f.branches.get(key, ())
    driver = f.driver_of(out_port, wavelength)
    if driver is not None:
        raise WavelengthBusy(f"node {node.id}: port {out_port} already carries wavelength {wavelength}")
    m = len(outs) + 1
    flagged = key in f.electrical or electrical
    if m > 1 and not flagged:
        if not node.is_splitter:
            raise SplitterUnavailable(f"node {node.id} has no light splitter")
        if m > node.max_fanout:
            raise FanoutExceeded(f"node {node.id}: fanout {m} > {node.max_fanout}")
    branches = dict(f.branches)
    branches[key] = tuple(sorted(outs + (out_port,)))
    marks = f.electrical | {key} if electrical and m > 1 else f.electrical
    return FabricState(f.node, branches, marks)


def release_branch(f: FabricState, in_port: int, wavelength: int, out_port: int) -> FabricState:
    key = (in_port, wavelength)
    outs = f.branches.get(key, ())
    if out_port not in outs:
        raise UnknownBranch(f"node {f.node}: no branch {in_port}->{out_port} on wavelength {wavelength}")
    branches = dict(f.branches)
    rest = tuple(p for p in outs if p != out_port)
    marks = f.electrical
    if rest:
        branches[key] = rest
        if len(rest) == 1:
            marks = marks - {key}
    else:
        del branches[key]
        marks = marks - {key}
    return FabricState(f.node, branches, marks)
