"""Least-cost routing, OSPF path / SDN link entity sets, and baseline loads."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError, TopologyError
from .partition import Partition
from .topology import Flow, Topology

# adjacency[u] = [(v, weight, link_index), ...]
Adjacency = Sequence[Sequence[tuple[int, int, int]]]


@dataclass(frozen=True)
class OspfPath:
    id: int
    source: int
    target: int
    nodes: tuple[int, ...]
    links: tuple[int, ...]
    cost: int
    subdomain: int


@dataclass(frozen=True)
class SdnLink:
    id: int
    source: int
    target: int
    link: int


def shortest_paths(
    adjacency: Adjacency, names: Sequence[str], src: int
) -> dict[int, tuple[int, tuple[int, ...]]]:
    """Single-source least-cost paths with a deterministic tie-break.

    Among equal-cost paths the one whose node-name sequence is
    lexicographically smallest wins. That choice is prefix- and
    suffix-closed, so the result is a tree and agrees with hop-by-hop
    forwarding toward each target. The source maps to ``(0, (src,))``.
    """
    dist = {src: 0}
    heap = [(0, src)]
    done: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w, _ in adjacency[u]:
            nd = d + w
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    preds: dict[int, list[int]] = {v: [] for v in dist}
    for u in dist:
        for v, w, _ in adjacency[u]:
            if v in dist and dist[u] + w == dist[v]:
                preds[v].append(u)
    order = sorted(dist, key=lambda v: dist[v])
    best: dict[int, tuple[int, ...]] = {src: (src,)}
    keys: dict[int, tuple[str, ...]] = {src: (names[src],)}
    for v in order:
        if v == src:
            continue
        # compare whole sequences: a key that is a prefix of another is not
        # smaller once v is appended
        choice = min(preds[v], key=lambda u: keys[u] + (names[v],))
        best[v] = best[choice] + (v,)
        keys[v] = keys[choice] + (names[v],)
    return {v: (dist[v], best[v]) for v in dist}


def global_adjacency(topology: Topology) -> list[list[tuple[int, int, int]]]:
    return [
        [(v, link.metric, link.index) for v, link in topology.neighbors(u)]
        for u in range(topology.n_nodes)
    ]


def subdomain_adjacency(
    topology: Topology, partition: Partition, index: int
) -> list[list[tuple[int, int, int]]]:
    """Hops inside one sub-domain; SDN nodes have no outgoing hops."""
    members = partition.subdomains[index].nodes
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(topology.n_nodes)]
    for u in members:
        if u in partition.sdn_nodes:
            continue
        adj[u] = [
            (v, link.metric, link.index) for v, link in topology.neighbors(u) if v in members
        ]
    return adj


def path_links(topology: Topology, nodes: Sequence[int]) -> tuple[int, ...]:
    out = []
    for u, v in zip(nodes, nodes[1:]):
        link = topology.link_between(u, v)
        if link is None:
            raise TopologyError(f"no link {topology.names[u]}-{topology.names[v]}")
        out.append(link.index)
    return tuple(out)


def build_entities(
    topology: Topology, partition: Partition
) -> tuple[list[OspfPath], list[SdnLink]]:
    """Enumerate OSPF paths (set P) and directed SDN links (set L^sdn).

    P holds, per sub-domain, the tie-broken least-cost path from every
    internal node to every other member of that sub-domain, computed without
    hops that leave an SDN node.
    """
    names = topology.names
    paths: list[OspfPath] = []
    for sd in partition.subdomains:
        adj = subdomain_adjacency(topology, partition, sd.index)
        members = sorted(sd.nodes)
        for s in sd.sorted_internal():
            tree = shortest_paths(adj, names, s)
            for t in members:
                if t == s or t not in tree:
                    continue
                cost, nodes = tree[t]
                paths.append(
                    OspfPath(len(paths), s, t, nodes, path_links(topology, nodes), cost, sd.index)
                )
    sdn_links: list[SdnLink] = []
    for s in sorted(partition.sdn_nodes):
        for v, link in topology.neighbors(s):
            sdn_links.append(SdnLink(len(sdn_links), s, v, link.index))
    return paths, sdn_links


@dataclass(frozen=True)
class OspfRouting:
    """Per-flow node sequences (aligned with the input flows) and link loads."""

    paths: tuple[tuple[int, ...], ...]
    link_paths: tuple[tuple[int, ...], ...]
    loads: np.ndarray


class RoutingTable:
    """Lazily computed global least-cost trees, one per source."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self._adj = global_adjacency(topology)
        self._trees: dict[int, dict[int, tuple[int, tuple[int, ...]]]] = {}

    def tree(self, src: int) -> dict[int, tuple[int, tuple[int, ...]]]:
        if src not in self._trees:
            self._trees[src] = shortest_paths(self._adj, self.topology.names, src)
        return self._trees[src]

    def path(self, src: int, dst: int) -> tuple[int, ...]:
        try:
            return self.tree(src)[dst][1]
        except KeyError:
            raise TopologyError(
                f"{self.topology.names[dst]} unreachable from {self.topology.names[src]}"
            ) from None

    def distance(self, src: int, dst: int) -> int:
        return self.tree(src)[dst][0]


def ospf_route_all(
    topology: Topology, flows: Sequence[Flow], table: RoutingTable | None = None
) -> OspfRouting:
    """Route every flow on its global least-cost path; loads are per undirected link."""
    table = table or RoutingTable(topology)
    loads = np.zeros(len(topology.links))
    paths, lpaths = [], []
    for f in flows:
        nodes = table.path(f.src, f.dst)
        lp = path_links(topology, nodes)
        for li in lp:
            loads[li] += f.demand
        paths.append(nodes)
        lpaths.append(lp)
    return OspfRouting(tuple(paths), tuple(lpaths), loads)


def capacity_vector(topology: Topology) -> np.ndarray:
    if not topology.capacities_assigned:
        raise ModelError("link capacities are unassigned")
    return np.array([link.capacity for link in topology.links], dtype=float)


def intra_utilization(
    topology: Topology,
    partition: Partition,
    intra_flows: Sequence[Flow],
    table: RoutingTable | None = None,
) -> np.ndarray:
    """Utilization per link caused by plain-OSPF routing of the intra flows."""
    caps = capacity_vector(topology)
    for f in intra_flows:
        if not partition.shares_subdomain(f.src, f.dst):
            raise ModelError("intra_utilization given an inter-sub-domain flow")
    return ospf_route_all(topology, intra_flows, table).loads / caps
