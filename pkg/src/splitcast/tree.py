"""The multicast light-tree and leaf power along it."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .fabric import ADD_DROP, FabricState
from .topology import Topology

__all__ = ["LightTree", "BrokenChain", "leaf_power"]


class BrokenChain(ValueError):
    """No complete reservation chain from the source to a member."""


@dataclass(frozen=True)
class LightTree:
    session: str
    source: str
    members: frozenset[str]
    branches: frozenset[tuple[str, str]]
    wavelengths: tuple[tuple[tuple[str, str], int], ...] = ()

    @property
    def nodes(self) -> frozenset[str]:
        out = {self.source}
        for p, c in self.branches:
            out.update((p, c))
        return frozenset(out)

    def parent(self, node: str) -> str | None:
        parents = [p for p, c in self.branches if c == node]
        return parents[0] if parents else None

    def children(self, node: str) -> list[str]:
        return sorted(c for p, c in self.branches if p == node)

    def wavelength(self, branch: tuple[str, str]) -> int:
        return dict(self.wavelengths)[branch]

    def path_to(self, node: str) -> list[str]:
        """Source-to-``node`` vertex list following branches upward."""
        parent_of = {c: p for p, c in self.branches}
        path = [node]
        while path[-1] != self.source:
            nxt = parent_of.get(path[-1])
            if nxt is None or len(path) > len(self.branches) + 1:
                raise BrokenChain(f"{node} is not connected to source {self.source}")
            path.append(nxt)
        path.reverse()
        return path

    def edge_set(self) -> frozenset[tuple[str, str]]:
        return self.branches

    def to_dict(self) -> dict:
        return {
            "session": self.session,
            "source": self.source,
            "members": sorted(self.members),
            "branches": sorted([list(b) for b in self.branches]),
            "wavelengths": [[p, c, w] for (p, c), w in sorted(self.wavelengths)],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def leaf_power(
    tree: LightTree,
    fabrics: Mapping[str, FabricState],
    member: str,
    topology: Topology,
    amplification: Mapping[str, Fraction | int] | None = None,
) -> Fraction:
    """Power reaching ``member`` for a unit source signal.

    Walks the reservation chain hop by hop; every node on the way contributes
    ``gain / m`` where ``m`` is the number of outputs its key drives (``m`` is
    taken as 1 for electrically duplicated keys, such as the source's).
    """
    if member not in tree.members:
        raise BrokenChain(f"{member} is not a member of session {tree.session}")
    gains = amplification or {}
    try:
        path = tree.path_to(member)
    except BrokenChain:
        raise
    power = Fraction(1)
    in_port = ADD_DROP
    for here, nxt in zip(path, path[1:]):
        wavelength = tree.wavelength((here, nxt))
        fabric = fabrics.get(here)
        out_port = topology.port(here, nxt)
        outs = fabric.outputs(in_port, wavelength) if fabric else ()
        if out_port not in outs:
            raise BrokenChain(f"gap at {here}: no reservation toward {nxt} on wavelength {wavelength}")
        gain = Fraction(gains.get(here, 1))
        if gain < 1:
            raise ValueError(f"gain at {here} must be >= 1")
        # Electrically duplicated outputs are regenerated at full power.
        share = 1 if (in_port, wavelength) in fabric.electrical else len(outs)
        power *= gain / share
        in_port = topology.port(nxt, here)
    return power
