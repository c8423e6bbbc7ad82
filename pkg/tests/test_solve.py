import json
import sys
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from hybridte.errors import DecodeError, InfeasibleError, SizeGateError, SolverError
from hybridte.model import (
    HybridInstance,
    IlpModel,
    build_fullte_model,
    build_hybrid_model,
    cost,
)
from hybridte.partition import derive_partition
from hybridte.solve import (
    check_feasible,
    complete_values,
    decode_and_validate,
    ospf_point,
    parse_solution,
    solve_exhaustive,
    solve_external,
)
from hybridte.topology import Flow, full_mesh_flows, load_topology

from conftest import make_topology, node, random_gated_instance

SOLVER = "hybridte-highs"


def stub(tmp_path, body, code=0):
    """A fake solver that writes ``body`` to the solution path and exits."""
    script = tmp_path / "stub.py"
    script.write_text(textwrap.dedent(f"""
        import sys
        open(sys.argv[2], "w").write({body!r})
        sys.exit({code})
    """))
    return [sys.executable, str(script)]


def tiny_model():
    m = IlpModel(name="t", binaries=["x"], continuous=["U_l0", "COST_l0"], n_links=1)
    m.objective = [(1.0, "COST_l0")]
    m.add("c", [(1.0, "x")], "<=", 1)
    return m


def bottleneck_instance():
    t = load_topology("ring6")
    n = {k: node(t, k) for k in "abcd"}
    caps = [5.0 if {t.names[l.u], t.names[l.v]} == {"a", "b"} else 20.0 for l in t.links]
    t = t.with_capacities(caps)
    part = derive_partition(t, t.sdn_nodes)
    flows = [Flow(n[s], n[d], 4.0) for s, d in ("ac", "ad", "bc", "bd")]
    return t, HybridInstance.build(t, part, flows)


# -- solution file contract ----------------------------------------------------


def test_stub_contract(tmp_path):
    m = tiny_model()
    sol = solve_external(m, stub(tmp_path, "# c\nx 0.9999995\nCOST_l0 2.5\nOBJECTIVE 2.5\n"))
    assert sol.value("x") == 1.0 and sol.objective == 2.5 and sol.value("U_l0") == 0


@pytest.mark.parametrize(
    "body, code, err, msg",
    [
        ("OBJECTIVE 0\n", 2, InfeasibleError, "infeasible"),
        ("", 1, SolverError, "exited with 1"),
        ("x one\nOBJECTIVE 0\n", 0, SolverError, "unparseable"),
        ("x 1 2\nOBJECTIVE 0\n", 0, SolverError, "unparseable"),
        ("x 1\n", 0, SolverError, "no OBJECTIVE"),
        ("x 1.1\nOBJECTIVE 0\n", 0, SolverError, "outside"),
        ("x -0.01\nOBJECTIVE 0\n", 0, SolverError, "outside"),
        ("x 0.5\nOBJECTIVE 0\n", 0, SolverError, "fractional"),
        ("y 1\nOBJECTIVE 0\n", 0, SolverError, "unknown variable"),
        ("COST_l0 1\nOBJECTIVE 3\n", 0, SolverError, "differs"),
    ],
)
def test_stub_errors(tmp_path, body, code, err, msg):
    with pytest.raises(err, match=msg):
        solve_external(tiny_model(), stub(tmp_path, body, code))


def test_missing_solver():
    with pytest.raises(SolverError, match="not found"):
        solve_external(tiny_model(), "/nonexistent/solver")


def test_conflicting_equalities_infeasible():
    m = tiny_model()
    m.add("e1", [(1.0, "x")], "=", 1)
    m.add("e2", [(1.0, "x")], "=", 0)
    with pytest.raises(InfeasibleError):
        solve_external(m, SOLVER)


def test_zero_objective():
    assert abs(solve_external(tiny_model(), SOLVER).objective) <= 1e-6


def test_workdir_layout(tmp_path, ring6, ring6_partition):
    inst = HybridInstance.build(ring6, ring6_partition, full_mesh_flows(ring6, 2))
    solve_external(build_hybrid_model(inst), SOLVER, tmp_path / "w")
    assert (tmp_path / "w" / "model.lp").exists() and (tmp_path / "w" / "solution.out").exists()


# -- oracle --------------------------------------------------------------------


def test_ring6_oracle_matches_external(ring6, ring6_partition):
    flows = [Flow(f.src, f.dst, f.demand / 5) for f in full_mesh_flows(ring6, 1)]
    m = build_hybrid_model(HybridInstance.build(ring6, ring6_partition, flows))
    ext, orc = solve_external(m, SOLVER), solve_exhaustive(m)
    assert abs(ext.objective - orc.objective) <= 1e-6
    assert check_feasible(m, orc.values) == []


@pytest.mark.parametrize("seed", range(6))
def test_random_oracle_matches_external(seed):
    m = build_hybrid_model(random_gated_instance(seed))
    assert abs(solve_external(m, SOLVER).objective - solve_exhaustive(m).objective) <= 1e-6


def test_altered_metric_rows():
    t, inst = bottleneck_instance()
    m = build_hybrid_model(inst)
    sol = solve_exhaustive(m)
    dec = decode_and_validate(m, sol)
    walks = {(t.names[r.src], t.names[r.dst]): "-".join(t.names[v] for v in r.nodes)
             for r in dec.routes.values()}
    assert walks == {("a", "c"): "a-x-c", ("a", "d"): "a-x-c-d", ("b", "c"): "b-y-d-c",
                     ("b", "d"): "b-y-d"}
    for d in "cd":
        k = inst.catalog.sets[dec.lsa_selection[0, node(t, d)]]
        assert {(t.names[s], t.names[b]) for s, b in k.mapping} == {("a", "x"), ("b", "y")}
        assert k.realizable


def test_oracle_one_walk_and_zero_flows():
    t = make_topology(["a", "s", "b"], [("a", "s"), ("s", "b")], capacities=[10.0, 10.0])
    part = derive_partition(t, [1])
    m = build_hybrid_model(HybridInstance.build(t, part, [Flow(0, 2, 3.0)]))
    sol = solve_exhaustive(m)
    assert [v for v in m.binaries if v.startswith("R") and sol.value(v)] == ["Rp_f0_p0", "Rl_f0_l1"]
    ring6 = load_topology("ring6")
    p3 = derive_partition(ring6, ring6.sdn_nodes)
    a, b = node(ring6, "a"), node(ring6, "b")
    inst = HybridInstance.build(ring6, p3, [Flow(a, b, 7.0)])
    assert solve_exhaustive(build_hybrid_model(inst)).objective == pytest.approx(cost(0.7))


def test_size_gate():
    t = load_topology("polska")
    from hybridte.partition import place_sdn_nodes

    topo = t.with_capacities([100.0] * len(t.links))
    part = derive_partition(topo, place_sdn_nodes(topo, 3))
    inst = HybridInstance.build(topo, part, full_mesh_flows(topo, 0))
    with pytest.raises(SizeGateError, match="too large"):
        solve_exhaustive(build_hybrid_model(inst))


# -- decoding ------------------------------------------------------------------


def _vars(m, fid, pairs, names):
    out = []
    for s, d in pairs:
        e = next(e for e in m.entities[fid] if (names[e.tail], names[e.head]) == (s, d))
        out.append(e.var)
    return out


def test_decode_walk_a_x_c_d():
    t, inst = bottleneck_instance()
    m = build_hybrid_model(inst)
    fid = next(i for i in inst.inter if (inst.flows[i].src, inst.flows[i].dst) == (0, 3))
    dec = decode_and_validate(m, solve_exhaustive(m))
    r = dec.routes[fid]
    assert [(e.kind, t.names[e.tail], t.names[e.head]) for e in r.entities] == [
        ("ospf", "a", "x"), ("sdn", "x", "c"), ("ospf", "c", "d")]
    assert not r.physical_revisit


def test_decode_lsa_inconsistency():
    t, inst = bottleneck_instance()
    m = build_hybrid_model(inst)
    sol = solve_exhaustive(m)
    values = dict(sol.values)
    b_c = next(i for i in inst.inter if inst.flows[i].src == 1 and inst.flows[i].dst == 2)
    for v in _vars(m, b_c, [("b", "y"), ("y", "d"), ("d", "c")], t.names):
        values.pop(v)
    for v in _vars(m, b_c, [("b", "x"), ("x", "c")], t.names):
        values[v] = 1.0
    bad = complete_values(m, [v for v, x in values.items() if x == 1.0 and not v.startswith(("U", "C"))])
    with pytest.raises(DecodeError, match="not allowed by LSA set"):
        decode_and_validate(m, bad)


def test_decode_prunes_detached_cycle(ring6):
    a, b = node(ring6, "a"), node(ring6, "b")
    m = build_fullte_model(ring6, [Flow(a, b, 1.0)])
    walk = _vars(m, 0, [("a", "b")], ring6.names)
    cyc = _vars(m, 0, [("c", "d"), ("d", "c")], ring6.names)
    clean = complete_values(m, walk)
    dirty = complete_values(m, walk + cyc)
    assert check_feasible(m, dirty.values) == []
    dec = decode_and_validate(m, dirty)
    assert [[e.var for e in c] for c in dec.routes[0].pruned] == [cyc]
    assert dec.objective == clean.objective == dirty.objective == 0
    assert dec.log and "pruned" in dec.log[0]


def test_decode_rejects_broken_walk(ring6):
    a, b = node(ring6, "a"), node(ring6, "b")
    m = build_fullte_model(ring6, [Flow(a, b, 1.0)])
    sol = complete_values(m, _vars(m, 0, [("a", "x")], ring6.names))
    with pytest.raises(DecodeError, match="outgoing entities"):
        decode_and_validate(m, sol)


def test_decode_json(ring6, ring6_partition):
    inst = HybridInstance.build(ring6, ring6_partition, full_mesh_flows(ring6, 4))
    m = build_hybrid_model(inst)
    doc = json.loads(decode_and_validate(m, solve_external(m, SOLVER)).to_json(ring6.names))
    assert len(doc["flows"]) == len(inst.inter)
    assert all(f["walk"][0] == f["src"] and f["walk"][-1] == f["dst"] for f in doc["flows"])


# -- properties ----------------------------------------------------------------


def _grammar_ok(entities):
    return all(not (x.kind == y.kind == "ospf") for x, y in zip(entities, entities[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_random_instances_properties(seed):
    inst = random_gated_instance(seed)
    m = build_hybrid_model(inst)
    injected = ospf_point(m)
    assert check_feasible(m, injected.values) == []
    sol = solve_exhaustive(m)
    dec = decode_and_validate(m, sol)
    assert dec.max_u_error <= 1e-6
    assert dec.objective <= injected.objective + 1e-6
    for r in dec.routes.values():
        assert _grammar_ok(r.entities)
        junctions = [r.src] + [e.head for e in r.entities]
        assert len(set(junctions)) == len(junctions)
        assert r.nodes[0] == r.src and r.nodes[-1] == r.dst


def test_parse_solution_direct():
    m = tiny_model()
    sol = parse_solution("\n# header\nx 1\nCOST_l0 0\nOBJECTIVE 0\n", m)
    assert sol.selected(m.binaries) == ["x"] and sol.objective == 0
