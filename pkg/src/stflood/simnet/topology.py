"""Graph topologies and their JSON file format.

File layout::

    {
      "nodes": 4,                      # or an explicit id list [0, 1, 2, 3]
      "coordinator": 0,
      "links": [[0, 1, 0.05], ...],    # undirected, base loss in [0, 1)
      "jam_exposure": {"0": 0.5, ...}  # optional, default 1.0 per node
    }
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from stflood.core import NodeId, ValidationError


@dataclass
class Topology:
    node_count: int
    links: dict[tuple[NodeId, NodeId], float]
    coordinator: NodeId = 0
    jam_exposure: dict[NodeId, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.node_count < 1:
            raise ValidationError("topology needs at least one node")
        if not 0 <= self.coordinator < self.node_count:
            raise ValidationError(f"coordinator {self.coordinator} is not a node")
        clean: dict[tuple[int, int], float] = {}
        for (a, b), loss in self.links.items():
            a, b = int(a), int(b)
            if a == b:
                raise ValidationError(f"self-link on node {a}")
            for n in (a, b):
                if not 0 <= n < self.node_count:
                    raise ValidationError(f"link references unknown node {n}")
            if not 0.0 <= loss < 1.0:
                raise ValidationError(f"base_loss of link {a}-{b} must be in [0, 1)")
            clean[(min(a, b), max(a, b))] = float(loss)
        self.links = clean
        exposure = {n: 1.0 for n in range(self.node_count)}
        for n, x in self.jam_exposure.items():
            n = int(n)
            if n not in exposure:
                raise ValidationError(f"jam_exposure references unknown node {n}")
            if not 0.0 <= x <= 1.0:
                raise ValidationError(f"jam_exposure of node {n} must be in [0, 1]")
            exposure[n] = float(x)
        self.jam_exposure = exposure
        if not self.is_connected():
            raise ValidationError("topology graph is not connected")
        self._build_incoming()

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    def neighbors(self, node: NodeId) -> list[NodeId]:
        lo, hi = self._in_ptr[node], self._in_ptr[node + 1]
        return self._in_src[lo:hi].tolist()

    def is_connected(self, members=None) -> bool:
        members = set(self.nodes if members is None else members)
        if not members:
            return False
        adj: dict[int, list[int]] = {n: [] for n in members}
        for a, b in self.links:
            if a in members and b in members:
                adj[a].append(b)
                adj[b].append(a)
        start = next(iter(members))
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return seen == members

    def _build_incoming(self) -> None:
        incoming: list[list[tuple[int, float]]] = [[] for _ in self.nodes]
        for (a, b), loss in sorted(self.links.items()):
            incoming[b].append((a, loss))
            incoming[a].append((b, loss))
        ptr = [0]
        src: list[int] = []
        base: list[float] = []
        for rx in self.nodes:
            for tx, loss in sorted(incoming[rx]):
                src.append(tx)
                base.append(loss)
            ptr.append(len(src))
        # directed edge e points from in_src[e] to the receiver owning slot e
        self._in_ptr = np.asarray(ptr, dtype=np.int32)
        self._in_src = np.asarray(src, dtype=np.int32)
        self._in_base = np.asarray(base, dtype=np.float64)
        self._exposure = np.asarray([self.jam_exposure[n] for n in self.nodes], dtype=np.float64)

    @property
    def edge_count(self) -> int:
        return len(self._in_src)

    # -- file format -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": self.node_count,
            "coordinator": self.coordinator,
            "links": [[a, b, loss] for (a, b), loss in sorted(self.links.items())],
            "jam_exposure": {str(n): x for n, x in sorted(self.jam_exposure.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        try:
            nodes = d["nodes"]
            if isinstance(nodes, list):
                if sorted(nodes) != list(range(len(nodes))):
                    raise ValidationError("node ids must be dense 0..D-1")
                nodes = len(nodes)
            links = {}
            for entry in d["links"]:
                a, b = int(entry[0]), int(entry[1])
                links[(a, b)] = float(entry[2]) if len(entry) > 2 else 0.0
            exposure = d.get("jam_exposure", {})
            if isinstance(exposure, list):
                exposure = dict(enumerate(exposure))
            return cls(int(nodes), links, int(d.get("coordinator", 0)), exposure, d.get("name", ""))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"malformed topology description: {exc!r}") from None

    def dumps(self) -> str:
        d = self.to_dict()
        links = ",\n    ".join(json.dumps(link) for link in d.pop("links"))
        head = json.dumps(d, indent=2)[:-2]
        return f'{head},\n  "links": [\n    {links}\n  ]\n}}\n'

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        topo = cls.from_dict(data)
        if not topo.name:
            topo.name = path.stem
        return topo


def reference_topology() -> Topology:
    """The in-repo 18-node, 3-hop line-of-clusters deployment."""
    text = resources.files("stflood.data").joinpath("reference_topology.json").read_text()
    return Topology.from_dict(json.loads(text))


def line_topology(n: int, loss: float = 0.0) -> Topology:
    return Topology(n, {(i, i + 1): loss for i in range(n - 1)}, name=f"line{n}")


def diamond_topology(loss: float = 0.0, chord: bool = True) -> Topology:
    """0 and 3 reach each other through relays 1 and 2; with the 1-2 chord node 3 never needs to forward."""
    links = {(0, 1): loss, (0, 2): loss, (1, 3): loss, (2, 3): loss}
    if chord:
        links[(1, 2)] = loss
    return Topology(4, links, name="diamond")
