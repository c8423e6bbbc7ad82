"""Sub-domain decomposition induced by a set of SDN nodes."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import PartitionError
from .topology import Flow, Link, Topology


@dataclass(frozen=True)
class SubDomain:
    index: int
    internal_nodes: frozenset[int]
    border_nodes: frozenset[int]
    internal_links: tuple[Link, ...]

    @property
    def nodes(self) -> frozenset[int]:
        return self.internal_nodes | self.border_nodes

    def sorted_internal(self) -> list[int]:
        return sorted(self.internal_nodes)

    def sorted_borders(self) -> list[int]:
        return sorted(self.border_nodes)


@dataclass(frozen=True)
class Partition:
    topology: Topology
    sdn_nodes: frozenset[int]
    subdomains: tuple[SubDomain, ...]
    membership: tuple[frozenset[int], ...]
    degenerate: bool = False

    def subdomain_of(self, node: int) -> frozenset[int]:
        return self.membership[node]

    def shares_subdomain(self, u: int, v: int) -> bool:
        return bool(self.membership[u] & self.membership[v])


def _components(topology: Topology, removed: frozenset[int]) -> list[list[int]]:
    seen: set[int] = set(removed)
    comps = []
    for start in range(topology.n_nodes):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in topology.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def derive_partition(topology: Topology, sdn_nodes: Iterable[int]) -> Partition:
    """Split ``topology`` at ``sdn_nodes``.

    Sub-domains are numbered by their smallest internal node index. An SDN
    node is a border of every sub-domain it has a link into. When the SDN set
    does not disconnect the graph the result has one sub-domain and
    ``degenerate=True``.
    """
    sdn = frozenset(sdn_nodes)
    for s in sdn:
        if not 0 <= s < topology.n_nodes:
            raise PartitionError(f"SDN node {s} is not a topology node")
    topology = topology.with_sdn(sdn)
    comps = _components(topology, sdn)
    comps.sort(key=lambda c: c[0])
    node_sd: dict[int, int] = {}
    for i, comp in enumerate(comps):
        for n in comp:
            node_sd[n] = i
    membership: list[set[int]] = [set() for _ in range(topology.n_nodes)]
    borders: list[set[int]] = [set() for _ in comps]
    for n, i in node_sd.items():
        membership[n].add(i)
    for s in sdn:
        for v, _ in topology.neighbors(s):
            if v in node_sd:
                membership[s].add(node_sd[v])
                borders[node_sd[v]].add(s)
    subdomains = []
    for i, comp in enumerate(comps):
        members = set(comp) | borders[i]
        internal_links = tuple(
            l for l in topology.links if l.u in members and l.v in members
        )
        subdomains.append(
            SubDomain(i, frozenset(comp), frozenset(borders[i]), internal_links)
        )
    return Partition(
        topology,
        sdn,
        tuple(subdomains),
        tuple(frozenset(m) for m in membership),
        degenerate=len(comps) < 2,
    )


def cross_pair_count(topology: Topology, sdn_nodes: Iterable[int]) -> int:
    """Ordered non-SDN node pairs lying in different components after removal."""
    comps = _components(topology, frozenset(sdn_nodes))
    total = sum(len(c) for c in comps)
    return total * total - sum(len(c) ** 2 for c in comps)


def place_sdn_nodes(topology: Topology, k: int) -> frozenset[int]:
    """Exhaustive separator search maximizing inter-sub-domain node pairs.

    Ties go to the lexicographically smallest sorted tuple of node names.
    """
    n = topology.n_nodes
    if not 1 <= k < n:
        raise PartitionError(f"SDN node count must satisfy 1 <= k < {n}, got {k}")
    best: tuple[int, tuple[str, ...]] | None = None
    best_set: frozenset[int] | None = None
    for subset in itertools.combinations(range(n), k):
        comps = _components(topology, frozenset(subset))
        if len(comps) < 2:
            continue
        total = sum(len(c) for c in comps)
        score = total * total - sum(len(c) ** 2 for c in comps)
        key = (-score, tuple(sorted(topology.names[i] for i in subset)))
        if best is None or key < best:
            best, best_set = key, frozenset(subset)
    if best_set is None:
        raise PartitionError(f"no separator of size {k}")
    return best_set


def classify_flows(partition: Partition, flows: Sequence[Flow]) -> tuple[list[Flow], list[Flow]]:
    """Split flows into (intra, inter) by whether the endpoints share a sub-domain."""
    intra, inter = [], []
    for f in flows:
        (intra if partition.shares_subdomain(f.src, f.dst) else inter).append(f)
    return intra, inter


def format_partition(partition: Partition) -> str:
    names = partition.topology.names
    lines = [f"SDN {names[s]}" for s in sorted(partition.sdn_nodes)]
    for sd in partition.subdomains:
        members = " ".join(names[n] for n in sorted(sd.nodes))
        lines.append(f"SUBDOMAIN {sd.index}: {members}")
    return "\n".join(lines) + "\n"


_SUBDOMAIN_RE = re.compile(r"^SUBDOMAIN\s+(\d+)\s*:\s*(.*)$")


def parse_partition(text: str, topology: Topology) -> Partition:
    """Read a partition file and re-derive it, checking the listed sub-domains."""
    sdn: list[int] = []
    listed: dict[int, frozenset[int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("SDN "):
            sdn.append(_lookup(topology, line[4:].strip(), lineno))
            continue
        m = _SUBDOMAIN_RE.match(line)
        if m is None:
            raise PartitionError(f"line {lineno}: unrecognized partition record {line!r}")
        listed[int(m.group(1))] = frozenset(
            _lookup(topology, nm, lineno) for nm in m.group(2).split()
        )
    partition = derive_partition(topology, sdn)
    if listed:
        derived = {sd.index: sd.nodes for sd in partition.subdomains}
        if listed != derived:
            raise PartitionError("SUBDOMAIN lines do not match the SDN node set")
    return partition


def _lookup(topology: Topology, name: str, lineno: int) -> int:
    try:
        return topology.index(name)
    except ValueError:
        raise PartitionError(f"line {lineno}: sdn node unknown: {name!r}") from None
