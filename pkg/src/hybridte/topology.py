"""Network topologies, traffic flows, and their text formats.

Two topology formats are understood:

* SNDlib native plain text (only the ``NODES`` and ``LINKS`` blocks are read).
* A line-oriented internal format::

      # comment
      NODE <name> [sdn]
      LINK <name1> <name2> <metric:int> <capacity:float|?>

Demands are CSV rows ``src,dst,demand_gbps`` with an optional header row.
"""

from __future__ import annotations

import csv
import io
import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import TopologyError

BUILTIN_TOPOLOGIES = ("atlanta", "polska", "ring6")

_NAME_RE = re.compile(r"^[^\s#(),]+$")


@dataclass(frozen=True)
class Link:
    """Undirected link with a symmetric OSPF metric and a capacity in Gbit/s.

    ``capacity`` is ``None`` while unassigned.
    """

    index: int
    u: int
    v: int
    metric: int = 1
    capacity: float | None = None
    label: str | None = None

    def other(self, node: int) -> int:
        if node == self.u:
            return self.v
        if node == self.v:
            return self.u
        raise ValueError(f"node {node} is not an endpoint of link {self.index}")


@dataclass(frozen=True)
class Flow:
    src: int
    dst: int
    demand: float


@dataclass(frozen=True)
class Topology:
    """Immutable connected graph with node roles and link attributes.

    Nodes are dense indices ``0..N-1``; ``names[i]`` is the label of node ``i``.
    """

    names: tuple[str, ...]
    links: tuple[Link, ...]
    sdn_nodes: frozenset[int] = frozenset()
    name: str = ""
    allow_single_node: bool = field(default=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)
    _adj: tuple = field(init=False, repr=False, compare=False)
    _pair: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "sdn_nodes", frozenset(self.sdn_nodes))
        n = len(self.names)
        if n == 0:
            raise TopologyError("topology has zero nodes")
        index: dict[str, int] = {}
        for i, nm in enumerate(self.names):
            if not _NAME_RE.match(nm):
                raise TopologyError(f"invalid node name {nm!r}")
            if nm in index:
                raise TopologyError(f"duplicate node name {nm!r}")
            index[nm] = i
        adj: list[list[tuple[int, Link]]] = [[] for _ in range(n)]
        pair: dict[frozenset, Link] = {}
        for pos, link in enumerate(self.links):
            if link.index != pos:
                raise TopologyError(f"link index {link.index} at position {pos}")
            if not (0 <= link.u < n and 0 <= link.v < n):
                raise TopologyError(f"link {pos} references an unknown node")
            if link.u == link.v:
                raise TopologyError(f"self-loop at node {self.names[link.u]!r}")
            if not isinstance(link.metric, (int, np.integer)) or link.metric < 1:
                raise TopologyError(f"link {self._lname(link)}: metric must be an integer >= 1")
            if link.capacity is not None and not (
                math.isfinite(link.capacity) and link.capacity > 0
            ):
                raise TopologyError(f"link {self._lname(link)}: capacity must be positive")
            key = frozenset((link.u, link.v))
            if key in pair:
                raise TopologyError(f"duplicate link {self._lname(link)}")
            pair[key] = link
            adj[link.u].append((link.v, link))
            adj[link.v].append((link.u, link))
        for row in adj:
            row.sort(key=lambda item: item[0])
        for s in self.sdn_nodes:
            if not 0 <= s < n:
                raise TopologyError(f"SDN node {s} is not a topology node")
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adj", tuple(tuple(row) for row in adj))
        object.__setattr__(self, "_pair", pair)
        if n == 1 and not self.allow_single_node:
            raise TopologyError("disconnected/degenerate topology: a single node")
        if not self._connected():
            raise TopologyError("disconnected/degenerate topology")

    def _lname(self, link: Link) -> str:
        return f"{self.names[link.u]}-{self.names[link.v]}"

    def _connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v, _ in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == len(self.names)

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise TopologyError(f"unknown node {name!r}") from None

    def neighbors(self, node: int) -> tuple[tuple[int, Link], ...]:
        """``(neighbor, link)`` pairs sorted by neighbor index."""
        return self._adj[node]

    def link_between(self, u: int, v: int) -> Link | None:
        return self._pair.get(frozenset((u, v)))

    def link_label(self, link: Link) -> str:
        return self._lname(link)

    def is_sdn(self, node: int) -> bool:
        return node in self.sdn_nodes

    @property
    def capacities_assigned(self) -> bool:
        return all(link.capacity is not None for link in self.links)

    def with_capacities(self, capacities: Sequence[float]) -> "Topology":
        if len(capacities) != len(self.links):
            raise TopologyError("one capacity per link required")
        links = [replace(l, capacity=float(c)) for l, c in zip(self.links, capacities)]
        return replace(self, links=tuple(links))

    def with_metrics(self, metrics: Sequence[int]) -> "Topology":
        links = [replace(l, metric=int(m)) for l, m in zip(self.links, metrics)]
        return replace(self, links=tuple(links))

    def with_sdn(self, nodes: Iterable[int]) -> "Topology":
        return replace(self, sdn_nodes=frozenset(nodes))


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return (line if pos < 0 else line[:pos]).strip()


# -- SNDlib native -----------------------------------------------------------

_SND_NODE = re.compile(r"^(\S+)\s*\((.*)\)\s*$")
_SND_LINK = re.compile(r"^(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)(.*)$")
_SND_HEADER = re.compile(r"^([A-Z_]+)\s*\($")


def parse_sndlib(text: str, name: str = "", allow_single_node: bool = False) -> Topology:
    """Parse an SNDlib native network file.

    Metrics default to 1 and capacities stay unassigned; pre-installed
    capacities, modules and demand sections are ignored.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("?") or line.startswith("#") or not line:
            continue
        if current is None:
            m = _SND_HEADER.match(line)
            if m is None:
                raise TopologyError(f"line {lineno}: malformed section header {line!r}")
            current = m.group(1)
            if current in sections:
                raise TopologyError(f"line {lineno}: repeated section {current}")
            sections[current] = []
        elif line == ")":
            current = None
        else:
            sections[current].append(line)
    if current is not None:
        raise TopologyError(f"section {current} is not closed")
    if "NODES" not in sections:
        raise TopologyError("missing NODES section")
    names: list[str] = []
    for line in sections["NODES"]:
        m = _SND_NODE.match(line)
        node = m.group(1) if m else line.split()[0]
        if node in names:
            raise TopologyError(f"duplicate node name {node!r}")
        names.append(node)
    if not names:
        raise TopologyError("topology has zero nodes")
    lookup = {nm: i for i, nm in enumerate(names)}
    links: list[Link] = []
    for line in sections.get("LINKS", []):
        m = _SND_LINK.match(line)
        if m is None:
            raise TopologyError(f"malformed link line {line!r}")
        label, a, b = m.group(1), m.group(2), m.group(3)
        for end in (a, b):
            if end not in lookup:
                raise TopologyError(f"link {label} references unknown node {end!r}")
        links.append(Link(len(links), lookup[a], lookup[b], label=label))
    return Topology(tuple(names), tuple(links), name=name, allow_single_node=allow_single_node)


# -- internal format ---------------------------------------------------------


def parse_internal(text: str, name: str = "", allow_single_node: bool = False) -> Topology:
    names: list[str] = []
    sdn: set[int] = set()
    pending: list[tuple[int, str, str, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "NODE":
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "sdn"):
                raise TopologyError(f"line {lineno}: expected 'NODE <name> [sdn]'")
            if parts[1] in names:
                raise TopologyError(f"line {lineno}: duplicate node name {parts[1]!r}")
            names.append(parts[1])
            if len(parts) == 3:
                sdn.add(len(names) - 1)
        elif kind == "LINK":
            if len(parts) != 5:
                raise TopologyError(
                    f"line {lineno}: expected 'LINK <a> <b> <metric> <capacity|?>'"
                )
            pending.append((lineno, *parts[1:]))
        else:
            raise TopologyError(f"line {lineno}: unknown record {kind!r}")
    if not names:
        raise TopologyError("topology has zero nodes")
    lookup = {nm: i for i, nm in enumerate(names)}
    links: list[Link] = []
    for lineno, a, b, metric_s, cap_s in pending:
        for end in (a, b):
            if end not in lookup:
                raise TopologyError(f"line {lineno}: link references unknown node {end!r}")
        try:
            metric = int(metric_s)
        except ValueError:
            raise TopologyError(f"line {lineno}: metric must be an integer") from None
        if metric < 1:
            raise TopologyError(f"line {lineno}: metric must be >= 1")
        capacity: float | None
        if cap_s == "?":
            capacity = None
        else:
            try:
                capacity = float(cap_s)
            except ValueError:
                raise TopologyError(f"line {lineno}: bad capacity {cap_s!r}") from None
            if not (math.isfinite(capacity) and capacity > 0):
                raise TopologyError(f"line {lineno}: capacity must be positive")
        links.append(Link(len(links), lookup[a], lookup[b], metric, capacity))
    return Topology(
        tuple(names), tuple(links), frozenset(sdn), name=name, allow_single_node=allow_single_node
    )


def format_internal(topology: Topology) -> str:
    out = io.StringIO()
    for i, nm in enumerate(topology.names):
        out.write(f"NODE {nm}{' sdn' if i in topology.sdn_nodes else ''}\n")
    for link in topology.links:
        cap = "?" if link.capacity is None else repr(float(link.capacity))
        out.write(
            f"LINK {topology.names[link.u]} {topology.names[link.v]} {link.metric} {cap}\n"
        )
    return out.getvalue()


def load_topology(source: str | Path, allow_single_node: bool = False) -> Topology:
    """Read a topology file, or a builtin (``atlanta``, ``polska``, ``ring6``).

    The format is sniffed: files with a ``NODES (`` block are SNDlib native.
    """
    source = str(source)
    name = Path(source).stem
    if source in BUILTIN_TOPOLOGIES:
        text = builtin_text(source)
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise TopologyError(f"cannot read topology {source!r}: {exc}") from exc
    if re.search(r"^\s*NODES\s*\(", text, re.MULTILINE):
        return parse_sndlib(text, name=name, allow_single_node=allow_single_node)
    return parse_internal(text, name=name, allow_single_node=allow_single_node)


def builtin_text(name: str) -> str:
    fname = "ring6.topo" if name == "ring6" else f"{name}.txt"
    return resources.files("hybridte.data").joinpath(fname).read_text(encoding="utf-8")


# -- demands -----------------------------------------------------------------


def full_mesh_flows(
    topology: Topology,
    rng_seed: int | Sequence[int],
    low: float = 1.0,
    high: float = 7.0,
) -> list[Flow]:
    """One flow per ordered node pair with Uniform(low, high) demand.

    Pairs are visited in ``(src, dst)`` index order so a seed always yields
    the same demand vector.
    """
    if not low < high:
        raise ValueError("low must be smaller than high")
    rng = np.random.default_rng(rng_seed)
    flows = []
    n = topology.n_nodes
    for s in range(n):
        for d in range(n):
            if s == d:
                continue
            value = rng.uniform(low, high)
            while value <= low:
                value = rng.uniform(low, high)
            flows.append(Flow(s, d, float(value)))
    return flows


def parse_demands(text: str, topology: Topology) -> list[Flow]:
    flows = []
    for row in csv.reader(io.StringIO(text)):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].strip().startswith("#"):
            continue
        if [c.strip() for c in row] == ["src", "dst", "demand_gbps"]:
            continue
        if len(row) != 3:
            raise TopologyError(f"demand row {row!r}: expected src,dst,demand_gbps")
        s, d = topology.index(row[0].strip()), topology.index(row[1].strip())
        if s == d:
            raise TopologyError(f"demand row {row!r}: src equals dst")
        try:
            value = float(row[2])
        except ValueError:
            raise TopologyError(f"demand row {row!r}: bad demand") from None
        if not (math.isfinite(value) and value > 0):
            raise TopologyError(f"demand row {row!r}: demand must be positive")
        flows.append(Flow(s, d, value))
    return flows


def format_demands(flows: Iterable[Flow], topology: Topology) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["src", "dst", "demand_gbps"])
    for f in flows:
        writer.writerow([topology.names[f.src], topology.names[f.dst], repr(f.demand)])
    return out.getvalue()
