"""Shared fixtures and small independent reference implementations."""

from __future__ import annotations

import itertools
import random

import pytest

from hybridte.partition import derive_partition, place_sdn_nodes
from hybridte.topology import Flow, Link, Topology, load_topology

# acceptance criterion -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture
def ring6() -> Topology:
    return load_topology("ring6")


@pytest.fixture
def ring6_partition(ring6):
    return derive_partition(ring6, ring6.sdn_nodes)


def node(t: Topology, name: str) -> int:
    return t.index(name)


def make_topology(names, edges, sdn=(), metrics=None, capacities=None) -> Topology:
    idx = {n: i for i, n in enumerate(names)}
    links = []
    for i, (a, b) in enumerate(edges):
        m = metrics[i] if metrics else 1
        c = capacities[i] if capacities else None
        links.append(Link(i, idx[a], idx[b], m, c))
    return Topology(tuple(names), tuple(links), frozenset(idx[s] for s in sdn))


def random_connected(rng: random.Random, n: int, extra: int, max_metric: int = 3,
                     capacities: bool = True) -> Topology:
    names = [f"n{i}" for i in range(n)]
    edges = set()
    for v in range(1, n):
        u = rng.randrange(v)
        edges.add((u, v))
    pairs = [(u, v) for u, v in itertools.combinations(range(n), 2) if (u, v) not in edges]
    rng.shuffle(pairs)
    edges.update(pairs[:extra])
    edges = sorted(edges)
    links = tuple(
        Link(i, u, v, rng.randint(1, max_metric),
             float(rng.choice([10, 20, 40])) if capacities else None)
        for i, (u, v) in enumerate(edges)
    )
    return Topology(tuple(names), links, frozenset())


def random_gated_instance(seed: int):
    """Random separable topology with at most 8 nodes and 12 inter flows."""
    from hybridte.model import HybridInstance

    rng = random.Random(seed)
    while True:
        n = rng.randint(5, 8)
        topo = random_connected(rng, n, rng.randint(0, 3))
        k = rng.choice([1, 2])
        try:
            sdn = place_sdn_nodes(topo, k)
        except Exception:
            continue
        part = derive_partition(topo, sdn)
        pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
        inter = [p for p in pairs if not part.shares_subdomain(*p)]
        intra = [p for p in pairs if part.shares_subdomain(*p)]
        if not inter:
            continue
        rng.shuffle(inter)
        chosen = sorted(inter[: rng.randint(1, min(12, len(inter)))] + intra[: rng.randint(0, 6)])
        flows = [Flow(s, d, round(rng.uniform(1, 7), 3)) for s, d in chosen]
        try:
            inst = HybridInstance.build(part.topology, part, flows)
        except Exception:
            continue
        if len(inst.catalog.sets) <= 64:
            return inst
