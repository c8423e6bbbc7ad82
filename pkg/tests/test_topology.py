import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridte.errors import TopologyError
from hybridte.topology import (
    Flow,
    builtin_text,
    format_demands,
    format_internal,
    full_mesh_flows,
    load_topology,
    parse_demands,
    parse_internal,
    parse_sndlib,
)

from conftest import make_topology


def _block_lines(text, section):
    # independent count: non-empty lines between "<SECTION> (" and the closing ")"
    m = re.search(rf"^{section} \(\n(.*?)^\)", text, re.MULTILINE | re.DOTALL)
    return [l for l in m.group(1).splitlines() if l.strip()]


@pytest.mark.parametrize("name", ["atlanta", "polska"])
def test_sndlib_counts_match_file(name):
    text = builtin_text(name)
    t = parse_sndlib(text, name)
    assert t.n_nodes == len(_block_lines(text, "NODES"))
    assert len(t.links) == len(_block_lines(text, "LINKS"))
    assert not t.capacities_assigned
    assert all(l.metric == 1 for l in t.links)


def test_sndlib_known_sizes():
    assert (load_topology("polska").n_nodes, len(load_topology("polska").links)) == (12, 18)
    assert (load_topology("atlanta").n_nodes, len(load_topology("atlanta").links)) == (15, 22)


def test_sndlib_node_order_follows_file():
    t = load_topology("atlanta")
    assert t.names[:3] == ("N1", "N2", "N3")


SND_ONE = "NODES (\n  A ( 0 0 )\n)\nLINKS (\n)\n"


def test_single_node_rejected_by_default():
    with pytest.raises(TopologyError, match="disconnected/degenerate"):
        parse_sndlib(SND_ONE)
    assert parse_sndlib(SND_ONE, allow_single_node=True).n_nodes == 1


@pytest.mark.parametrize(
    "text, msg",
    [
        ("NODES \n A ( 0 0 )\n)\n", "malformed section header"),
        ("NODES (\n A ( 0 0 )\n A ( 1 1 )\n)\n", "duplicate node"),
        ("NODES (\n A ( 0 0 )\n)\nLINKS (\n L ( A B ) 0 0 0 0 ( )\n)\n", "unknown node"),
        ("NODES (\n)\n", "zero nodes"),
    ],
)
def test_sndlib_errors(text, msg):
    with pytest.raises(TopologyError, match=msg):
        parse_sndlib(text)


def test_sndlib_ignores_demands_section():
    text = builtin_text("polska") + "\nDEMANDS (\n  D1 ( Gdansk Warsaw ) 1 3.0 UNLIMITED\n)\n"
    assert parse_sndlib(text).n_nodes == 12


def test_ring6_internal(ring6):
    assert ring6.n_nodes == 6 and len(ring6.links) == 6
    assert {ring6.names[i] for i in ring6.sdn_nodes} == {"x", "y"}


@pytest.mark.parametrize(
    "text, msg",
    [
        ("NODE a\nNODE b\n", "disconnected"),
        ("NODE a\nNODE b\nLINK a b 1 10\nLINK b a 1 10\n", "duplicate link"),
        ("NODE a\nNODE b\nLINK a b 0 10\n", "metric"),
        ("NODE a\nNODE b\nLINK a b 1 -4\n", "capacity"),
        ("NODE a\nNODE b\nLINK a b 1 0\n", "capacity"),
        ("NODE a\nNODE b\nLINK a c 1 1\n", "unknown node"),
        ("NODE a\nNODE a\n", "duplicate node"),
        ("NODE a\nLINK a a 1 1\n", "self-loop"),
        ("VERTEX a\n", "unknown record"),
    ],
)
def test_internal_errors(text, msg):
    with pytest.raises(TopologyError, match=msg):
        parse_internal(text)


def test_unassigned_capacity_marker():
    t = parse_internal("NODE a\nNODE b sdn\nLINK a b 2 ?\n")
    assert t.links[0].capacity is None and t.links[0].metric == 2
    assert "LINK a b 2 ?" in format_internal(t)


@st.composite
def topologies(draw):
    n = draw(st.integers(2, 7))
    names = [f"v{i}" for i in range(n)]
    edges = [(names[draw(st.integers(0, i - 1))], names[i]) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=6))
    present = {frozenset(e) for e in edges}
    for a, b in extra:
        key = frozenset((names[a], names[b]))
        if a != b and key not in present:
            present.add(key)
            edges.append((names[a], names[b]))
    metrics = [draw(st.integers(1, 9)) for _ in edges]
    caps = [draw(st.one_of(st.none(), st.floats(0.1, 1000, allow_nan=False))) for _ in edges]
    sdn = draw(st.sets(st.sampled_from(names), max_size=n - 1))
    return make_topology(names, edges, sdn, metrics, caps)


@settings(max_examples=60, deadline=None)
@given(topologies())
def test_internal_round_trip(t):
    text = format_internal(t)
    again = parse_internal(text)
    assert again == t
    assert format_internal(again) == text


def test_full_mesh_size_and_determinism(ring6):
    a = full_mesh_flows(ring6, 11)
    assert len(a) == 30
    assert a == full_mesh_flows(ring6, 11)
    assert a != full_mesh_flows(ring6, 12)
    assert [(f.src, f.dst) for f in a] == sorted((f.src, f.dst) for f in a)


def test_full_mesh_mean():
    names = [f"p{i}" for i in range(101)]
    t = make_topology(names, list(zip(names, names[1:])))
    flows = full_mesh_flows(t, 3)
    assert len(flows) == 101 * 100 >= 10**4
    mean = np.mean([f.demand for f in flows])
    assert 3.9 <= mean <= 4.1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 5), st.floats(0.01, 10))
def test_full_mesh_open_interval(seed, low, width):
    t = make_topology(["a", "b", "c"], [("a", "b"), ("b", "c")])
    flows = full_mesh_flows(t, seed, low, low + width)
    assert len(flows) == 6
    assert all(low < f.demand < low + width for f in flows)


def test_full_mesh_bad_range(ring6):
    with pytest.raises(ValueError):
        full_mesh_flows(ring6, 0, 5, 5)


def test_demands_round_trip(ring6):
    flows = full_mesh_flows(ring6, 2)
    text = format_demands(flows, ring6)
    assert text.startswith("src,dst,demand_gbps\n")
    assert parse_demands(text, ring6) == flows


@pytest.mark.parametrize(
    "row", ["a,a,1", "a,q,1", "a,b,-1", "a,b,zz", "a,b"],
)
def test_demand_errors(ring6, row):
    with pytest.raises(TopologyError):
        parse_demands(row + "\n", ring6)


def test_flow_is_value_type():
    assert Flow(0, 1, 2.0) == Flow(0, 1, 2.0)
