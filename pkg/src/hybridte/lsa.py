"""Exit-mapping catalogs standing in for tuned LSAs.

A tuned advertisement is modelled as one external cost per border node of
a sub-domain. Internal node ``s`` leaves through the border minimizing
``dist(s, b) + cost(b)``. An exit mapping is realizable when integer costs
exist that make every internal node pick its assigned border strictly;
that is a system of difference constraints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CatalogCapExceeded
from .ospf import OspfPath, RoutingTable, shortest_paths, subdomain_adjacency
from .partition import Partition, SubDomain

METRIC_ONLY = "metric-only"
ALL_MAPPINGS = "all-mappings"
LSA_MODES = (METRIC_ONLY, ALL_MAPPINGS)
DEFAULT_CAP = 100_000


@dataclass(frozen=True)
class LsaSet:
    """One candidate advertisement for a sub-domain.

    ``mapping`` pairs every internal node (ascending) with its exit border.
    ``witness_costs`` is ``None`` for mappings kept only by the
    all-mappings relaxation. ``tie_broken`` marks plain-OSPF mappings that
    rely on the shortest-path tie-break rather than strict inequalities.
    """

    id: int
    subdomain: int
    mapping: tuple[tuple[int, int], ...]
    witness_costs: Mapping[int, int] | None
    allowed_paths: frozenset[int]
    tie_broken: bool = False

    def exit_of(self, node: int) -> int:
        return dict(self.mapping)[node]

    @property
    def realizable(self) -> bool:
        return self.witness_costs is not None and not self.tie_broken


def check_realizable(
    borders: Sequence[int],
    internal: Sequence[int],
    dist: Mapping[tuple[int, int], int],
    assignment: Mapping[int, int],
) -> dict[int, int] | None:
    """Return the canonical witness costs for ``assignment``, or ``None``.

    Constraints ``cost(m(s)) - cost(b) <= dist(s,b) - dist(s,m(s)) - 1`` are
    solved with Bellman-Ford from a virtual root; the resulting potentials
    are shifted so the smallest cost is 1.
    """
    borders = list(borders)
    if len(borders) == 1:
        return {borders[0]: 1}
    # weight[(u, v)]: cost(v) - cost(u) <= weight
    weight: dict[tuple[int, int], int] = {}
    for s in internal:
        m = assignment[s]
        for b in borders:
            if b == m:
                continue
            w = dist[s, b] - dist[s, m] - 1
            key = (b, m)
            if key not in weight or w < weight[key]:
                weight[key] = w
    pot = {b: 0 for b in borders}
    for _ in range(len(borders)):
        changed = False
        for (u, v), w in weight.items():
            if pot[u] + w < pot[v]:
                pot[v] = pot[u] + w
                changed = True
        if not changed:
            break
    else:
        for (u, v), w in weight.items():
            if pot[u] + w < pot[v]:
                return None
    low = min(pot.values())
    return {b: pot[b] - low + 1 for b in borders}


def internal_distances(paths: Sequence[OspfPath], subdomain: int) -> dict[tuple[int, int], int]:
    return {(p.source, p.target): p.cost for p in paths if p.subdomain == subdomain}


def _allowed(sd: SubDomain, paths: Sequence[OspfPath], mapping: Mapping[int, int]) -> frozenset[int]:
    ids = set()
    for p in paths:
        if p.subdomain != sd.index:
            continue
        if p.target in sd.border_nodes:
            if mapping[p.source] == p.target:
                ids.add(p.id)
        else:
            ids.add(p.id)
    return frozenset(ids)


@dataclass
class LsaCatalog:
    sets: list[LsaSet]
    n_subdomains: int
    mode: str
    # (subdomain, destination) -> id of the plain-OSPF-compatible set
    native: dict[tuple[int, int], int] = field(default_factory=dict)

    def for_subdomain(self, alpha: int) -> list[LsaSet]:
        return [k for k in self.sets if k.subdomain == alpha]

    def bel(self) -> np.ndarray:
        table = np.zeros((len(self.sets), self.n_subdomains), dtype=np.uint8)
        for k in self.sets:
            table[k.id, k.subdomain] = 1
        return table

    def dump(self, names: Sequence[str]) -> str:
        lines = []
        for k in self.sets:
            mapping = ",".join(f"{names[s]}:{names[b]}" for s, b in k.mapping)
            if k.witness_costs is None:
                costs = "-"
            else:
                costs = ",".join(f"{names[b]}:{c}" for b, c in sorted(k.witness_costs.items()))
            lines.append(f"k={k.id} subdomain={k.subdomain} mapping={mapping} costs={costs}")
        return "\n".join(lines) + ("\n" if lines else "")


def enumerate_lsa_sets(
    partition: Partition,
    paths: Sequence[OspfPath],
    mode: str = METRIC_ONLY,
    cap: int = DEFAULT_CAP,
    table: RoutingTable | None = None,
) -> LsaCatalog:
    """Build the per-sub-domain catalog of exit mappings.

    With ``table`` given, the plain-OSPF exit mapping toward every
    sub-domain-external destination is guaranteed to be in the catalog; if
    it is only realizable through the tie-break it is appended with
    ``tie_broken=True``.
    """
    if mode not in LSA_MODES:
        raise ValueError(f"unknown LSA mode {mode!r}")
    sets: list[LsaSet] = []
    index: dict[tuple[int, tuple], int] = {}
    for sd in partition.subdomains:
        borders = sd.sorted_borders()
        internal = sd.sorted_internal()
        if not borders:
            continue
        count = len(borders) ** len(internal)
        if count > cap:
            raise CatalogCapExceeded(
                f"sub-domain {sd.index} has {count} exit mappings (cap {cap})"
            )
        dist = internal_distances(paths, sd.index)
        for choice in itertools.product(borders, repeat=len(internal)):
            assignment = dict(zip(internal, choice))
            witness = check_realizable(borders, internal, dist, assignment)
            if witness is None and mode == METRIC_ONLY:
                continue
            mapping = tuple(zip(internal, choice))
            k = LsaSet(len(sets), sd.index, mapping, witness, _allowed(sd, paths, assignment))
            index[sd.index, mapping] = k.id
            sets.append(k)
    catalog = LsaCatalog(sets, len(partition.subdomains), mode)
    if table is not None:
        for sd in partition.subdomains:
            if not sd.border_nodes:
                continue
            for d in range(partition.topology.n_nodes):
                if d in sd.nodes:
                    continue
                mapping, costs = native_mapping(sd, table, d)
                key = (sd.index, mapping)
                if key not in index:
                    k = LsaSet(
                        len(sets), sd.index, mapping, costs,
                        _allowed(sd, paths, dict(mapping)), tie_broken=True,
                    )
                    index[key] = k.id
                    sets.append(k)
                catalog.native[sd.index, d] = index[key]
    return catalog


def native_mapping(
    sd: SubDomain, table: RoutingTable, destination: int
) -> tuple[tuple[tuple[int, int], ...], dict[int, int]]:
    """Plain-OSPF exit of each internal node toward ``destination``.

    Costs are the true remaining distances from each border, shifted so the
    smallest is 1.
    """
    mapping = []
    for s in sd.sorted_internal():
        nodes = table.path(s, destination)
        exit_node = next(v for v in nodes if v in sd.border_nodes)
        mapping.append((s, exit_node))
    remaining = {b: table.distance(b, destination) for b in sd.sorted_borders()}
    low = min(remaining.values())
    return tuple(mapping), {b: c - low + 1 for b, c in remaining.items()}


def lsa_param(catalog: LsaCatalog, paths: Sequence[OspfPath]) -> np.ndarray:
    """Binary table ``lsa[k, p]``: 1 if set k admits OSPF path p."""
    table = np.zeros((len(catalog.sets), len(paths)), dtype=np.uint8)
    for k in catalog.sets:
        for pid in k.allowed_paths:
            table[k.id, pid] = 1
    return table


def replay_witness(partition: Partition, lsa_set: LsaSet) -> dict[int, tuple[int, bool]]:
    """Route every internal node to a virtual sink behind the borders.

    Returns ``{s: (exit_border, unique)}`` where ``unique`` is True when no
    other border ties for the least cost.
    """
    if lsa_set.witness_costs is None:
        raise ValueError(f"LSA set {lsa_set.id} has no witness")
    topology = partition.topology
    sd = partition.subdomains[lsa_set.subdomain]
    adj = subdomain_adjacency(topology, partition, sd.index)
    sink = topology.n_nodes
    adj.append([])
    for b in sd.border_nodes:
        adj[b] = [(sink, lsa_set.witness_costs[b], -1)]
    names = list(topology.names) + ["\U0010ffff"]
    out = {}
    for s in sd.sorted_internal():
        tree = shortest_paths(adj, names, s)
        best, nodes = tree[sink]
        exit_node = nodes[-2]
        rivals = [
            tree[b][0] + lsa_set.witness_costs[b]
            for b in sd.border_nodes
            if b != exit_node and b in tree
        ]
        out[s] = (exit_node, all(r > best for r in rivals))
    return out
