"""External-solver adapter, exhaustive oracle, and solution decoding."""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeError, InfeasibleError, ModelError, SizeGateError, SolverError
from .model import (
    COST_LINES,
    Entity,
    HybridInstance,
    IlpModel,
    cost_var,
    lsa_var,
    rl,
    rp,
    u_var,
    write_lp,
)
from .ospf import capacity_vector

log = logging.getLogger(__name__)

BINARY_TOL = 1e-6
GATE_NODES = 8
GATE_FLOWS = 12
GATE_LSA = 64

_A = np.array([a for a, _ in COST_LINES])
_B = np.array([b for _, b in COST_LINES])


def link_costs(utilization: np.ndarray) -> np.ndarray:
    """Vectorized cost(U) per link."""
    u = np.asarray(utilization, dtype=float)
    if u.size == 0:
        return np.zeros(0)
    return np.maximum(0.0, np.max(_A[:, None] * u[None, :] - _B[:, None], axis=0))


@dataclass
class Solution:
    values: dict[str, float]
    objective: float
    source: str = "external"

    def value(self, name: str) -> float:
        return self.values.get(name, 0.0)

    def utilization(self, n_links: int) -> np.ndarray:
        return np.array([self.value(u_var(i)) for i in range(n_links)])

    def costs(self, n_links: int) -> np.ndarray:
        return np.array([self.value(cost_var(i)) for i in range(n_links)])

    def selected(self, names: Iterable[str]) -> list[str]:
        return [n for n in names if self.value(n) > 0.5]


# -- solution file -----------------------------------------------------------


def parse_solution(text: str, model: IlpModel) -> Solution:
    known = set(model.variables())
    binaries = set(model.binaries)
    values: dict[str, float] = {}
    objective = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolverError(f"solution line {lineno} unparseable: {raw!r}")
        name, tok = parts
        try:
            value = float(tok)
        except ValueError:
            raise SolverError(f"solution line {lineno} unparseable: {raw!r}") from None
        if not np.isfinite(value):
            raise SolverError(f"solution line {lineno}: non-finite value")
        if name == "OBJECTIVE":
            objective = value
            continue
        if name not in known:
            raise SolverError(f"solution line {lineno}: unknown variable {name!r}")
        if name in binaries:
            if not -BINARY_TOL <= value <= 1 + BINARY_TOL:
                raise SolverError(f"binary {name} = {value} outside [0, 1]")
            rounded = round(value)
            if abs(value - rounded) > BINARY_TOL:
                raise SolverError(f"binary {name} = {value} is fractional")
            value = float(rounded)
        values[name] = value
    if objective is None:
        raise SolverError("solution file has no OBJECTIVE line")
    total = sum(values.get(cost_var(i), 0.0) for i in range(model.n_links))
    if abs(total - objective) > 1e-6 * max(1.0, abs(objective)):
        raise SolverError(f"OBJECTIVE {objective} differs from sum of link costs {total}")
    return Solution(values, objective)


def format_solution(solution: Solution, model: IlpModel) -> str:
    lines = [f"{v} {solution.values[v]!r}" for v in model.variables() if solution.value(v) != 0]
    lines.append(f"OBJECTIVE {solution.objective!r}")
    return "\n".join(lines) + "\n"


def solve_external(
    model: IlpModel,
    solver_command: str | Sequence[str],
    workdir: str | Path | None = None,
    timeout: float | None = None,
) -> Solution:
    """Write ``model.lp``, run ``<cmd> model.lp solution.out``, parse the result."""
    cmd = shlex.split(solver_command) if isinstance(solver_command, str) else list(solver_command)
    if not cmd:
        raise SolverError("empty solver command")
    with tempfile.TemporaryDirectory(prefix="hybridte-") as tmp:
        out = Path(workdir) if workdir is not None else Path(tmp)
        out.mkdir(parents=True, exist_ok=True)
        lp, sol = out / "model.lp", out / "solution.out"
        write_lp(model, lp)
        if sol.exists():
            sol.unlink()
        try:
            proc = subprocess.run(
                cmd + [str(lp), str(sol)], capture_output=True, text=True, timeout=timeout
            )
        except FileNotFoundError:
            raise SolverError(f"solver not found: {cmd[0]}") from None
        except subprocess.TimeoutExpired:
            raise SolverError(f"solver timed out after {timeout} s") from None
        if proc.returncode == 2:
            raise InfeasibleError("solver reports the model infeasible")
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-3:]
            raise SolverError(f"solver exited with {proc.returncode}: {' | '.join(tail)}")
        if not sol.exists():
            raise SolverError("solver wrote no solution file")
        return parse_solution(sol.read_text(encoding="ascii"), model)


# -- evaluation helpers ------------------------------------------------------


def complete_values(model: IlpModel, selected: Iterable[str]) -> Solution:
    """Fill U and COST from a set of binaries at 1, via the utilization rows."""
    values = {v: 1.0 for v in selected}
    base = model.base_utilization
    util = np.array(base, dtype=float) if base is not None else np.zeros(model.n_links)
    for fid, ents in model.entities.items():
        demand = model.flows[fid].demand
        for e in ents:
            if e.var in values:
                for li in e.links:
                    util[li] += demand / model.capacities[li]
    costs = link_costs(util)
    for i in range(model.n_links):
        values[u_var(i)] = float(util[i])
        values[cost_var(i)] = float(costs[i])
    return Solution(values, float(costs.sum()), source="constructed")


def check_feasible(model: IlpModel, values: dict[str, float], tol: float = 1e-6) -> list[str]:
    """Names of constraints violated by ``values`` (missing variables read as 0)."""
    bad = []
    for c in model.constraints:
        lhs = sum(coef * values.get(v, 0.0) for coef, v in c.terms)
        if c.sense == "=" and abs(lhs - c.rhs) > tol:
            bad.append(c.name)
        elif c.sense == "<=" and lhs > c.rhs + tol:
            bad.append(c.name)
        elif c.sense == ">=" and lhs < c.rhs - tol:
            bad.append(c.name)
    for v in model.continuous:
        if values.get(v, 0.0) < -tol:
            bad.append(f"bound:{v}")
    return bad


def ospf_point(model: IlpModel) -> Solution:
    """Plain-OSPF routing of every inter flow, expressed in hybrid variables."""
    inst = model.instance
    if inst is None:
        raise ModelError("ospf_point needs a hybrid model")
    sdn = inst.partition.sdn_nodes
    selected = []
    for fid in inst.inter:
        f = inst.flows[fid]
        nodes = inst.table.path(f.src, f.dst)
        i = 0
        while i < len(nodes) - 1:
            u = nodes[i]
            if u in sdn:
                link = next(l for l in inst.sdn_links if l.source == u and l.target == nodes[i + 1])
                selected.append(rl(fid, link.id))
                i += 1
                continue
            j = next(j for j in range(i + 1, len(nodes)) if nodes[j] in sdn or nodes[j] == f.dst)
            p = inst.path_between(u, nodes[j])
            if p.nodes != nodes[i : j + 1]:
                raise ModelError(
                    f"flow {fid}: OSPF segment {nodes[i:j + 1]} is not the entity path {p.nodes}"
                )
            selected.append(rp(fid, p.id))
            i = j
    for alpha, d in inst.lsa_destinations():
        selected.append(lsa_var(inst.catalog.native[alpha, d], d))
    return complete_values(model, selected)


# -- exhaustive oracle -------------------------------------------------------


@dataclass(frozen=True)
class _Walk:
    vars: tuple[str, ...]
    reqs: tuple[tuple[tuple[int, int], frozenset[int]], ...]
    delta: np.ndarray = field(compare=False)


def _flow_walks(inst: HybridInstance, fid: int, caps: np.ndarray) -> list[_Walk]:
    f = inst.flows[fid]
    s, d = f.src, f.dst
    sdn = inst.partition.sdn_nodes
    catalog = inst.catalog
    paths_out: dict[int, list] = {}
    for p, gated in inst.relevant_paths(fid):
        paths_out.setdefault(p.source, []).append((p, gated))
    sdn_out: dict[int, list] = {}
    for l in inst.sdn_links:
        sdn_out.setdefault(l.source, []).append(l)
    allowing: dict[int, frozenset[int]] = {}
    walks: list[_Walk] = []

    def dfs(node, visited, names, reqs, links):
        if node == d:
            delta = np.zeros(len(caps))
            for li in links:
                delta[li] += f.demand / caps[li]
            walks.append(_Walk(tuple(names), tuple(reqs), delta))
            return
        if node in sdn:
            for l in sdn_out.get(node, ()):
                if l.target == s or l.target in visited:
                    continue
                dfs(l.target, visited | {l.target}, names + [rl(fid, l.id)], reqs, links + [l.link])
        else:
            for p, gated in paths_out.get(node, ()):
                if p.target == s or p.target in visited:
                    continue
                new_reqs = reqs
                if gated:
                    if p.id not in allowing:
                        allowing[p.id] = frozenset(
                            k.id for k in catalog.for_subdomain(p.subdomain)
                            if p.id in k.allowed_paths
                        )
                    new_reqs = reqs + [((p.subdomain, d), allowing[p.id])]
                dfs(p.target, visited | {p.target}, names + [rp(fid, p.id)], new_reqs,
                    links + list(p.links))

    dfs(s, frozenset({s}), [], [], [])
    return walks


def solve_exhaustive(model: IlpModel) -> Solution:
    """Globally optimal hybrid solution by enumeration, for tiny instances.

    Every loop-free, flowchart-valid entity walk is enumerated per flow; a
    depth-first branch and bound then picks one walk per flow while keeping
    the LSA selections of each (sub-domain, destination) pair consistent.
    """
    inst = model.instance
    if inst is None:
        raise ModelError("the exhaustive oracle needs a hybrid model")
    n = inst.topology.n_nodes
    if n > GATE_NODES or len(inst.inter) > GATE_FLOWS or len(inst.catalog.sets) > GATE_LSA:
        raise SizeGateError(
            f"instance too large for the oracle: {n} nodes, {len(inst.inter)} inter flows, "
            f"{len(inst.catalog.sets)} LSA sets (limits {GATE_NODES}/{GATE_FLOWS}/{GATE_LSA})"
        )
    caps = capacity_vector(inst.topology)
    base = np.array(inst.base_utilization, dtype=float)
    base_cost = link_costs(base).sum()
    per_flow = []
    for fid in inst.inter:
        walks = _flow_walks(inst, fid, caps)
        if not walks:
            raise InfeasibleError(f"flow {fid} has no valid walk")
        incr = [link_costs(base + w.delta).sum() - base_cost for w in walks]
        order = sorted(range(len(walks)), key=lambda i: (incr[i], len(walks[i].vars), walks[i].vars))
        per_flow.append(([walks[i] for i in order], min(incr)))
    # superadditivity of convex increments gives a valid remaining-flow bound
    tail_bound = [0.0] * (len(per_flow) + 1)
    for i in range(len(per_flow) - 1, -1, -1):
        tail_bound[i] = tail_bound[i + 1] + max(0.0, per_flow[i][1])

    best_cost = np.inf
    best_choice: list[_Walk] | None = None
    best_state: dict | None = None
    chosen: list[_Walk] = []

    def search(i, util, state):
        nonlocal best_cost, best_choice, best_state
        current = link_costs(util).sum()
        if current + tail_bound[i] >= best_cost - 1e-12:
            return
        if i == len(per_flow):
            best_cost, best_choice, best_state = current, list(chosen), dict(state)
            return
        for w in per_flow[i][0]:
            new_state = state
            ok = True
            for key, allowed in w.reqs:
                have = new_state.get(key)
                inter = allowed if have is None else have & allowed
                if not inter:
                    ok = False
                    break
                if new_state is state:
                    new_state = dict(state)
                new_state[key] = inter
            if not ok:
                continue
            chosen.append(w)
            search(i + 1, util + w.delta, new_state)
            chosen.pop()

    search(0, base, {})
    if best_choice is None:
        raise InfeasibleError("no consistent combination of walks")
    selected = [v for w in best_choice for v in w.vars]
    for alpha, d in inst.lsa_destinations():
        cands = best_state.get((alpha, d))
        pool = cands if cands is not None else [k.id for k in inst.catalog.for_subdomain(alpha)]
        selected.append(lsa_var(min(pool), d))
    sol = complete_values(model, selected)
    sol.source = "exhaustive"
    return sol


# -- decoding ----------------------------------------------------------------


@dataclass
class FlowRoute:
    flow: int
    src: int
    dst: int
    demand: float
    entities: list[Entity]
    nodes: tuple[int, ...]
    pruned: list[list[Entity]]
    physical_revisit: bool

    def describe(self, names: Sequence[str]) -> str:
        parts = []
        for e in self.entities:
            tag = "ospf" if e.kind == "ospf" else "sdn"
            parts.append(f"{tag}:{names[e.tail]}>{names[e.head]}")
        return " ".join(parts)


@dataclass
class Decoded:
    routes: dict[int, FlowRoute]
    utilization: np.ndarray
    costs: np.ndarray
    objective: float
    max_u_error: float
    lsa_selection: dict[tuple[int, int], int]
    log: list[str]

    def to_json(self, names: Sequence[str]) -> str:
        doc = {
            "objective": self.objective,
            "max_utilization_error": self.max_u_error,
            "flows": [
                {
                    "flow": r.flow,
                    "src": names[r.src],
                    "dst": names[r.dst],
                    "demand": r.demand,
                    "walk": [names[v] for v in r.nodes],
                    "entities": [e.var for e in r.entities],
                    "pruned_cycles": [[e.var for e in c] for c in r.pruned],
                    "physical_revisit": r.physical_revisit,
                }
                for r in self.routes.values()
            ],
            "lsa_selection": [
                {"subdomain": a, "destination": names[d], "set": k}
                for (a, d), k in sorted(self.lsa_selection.items())
            ],
            "utilization": [float(x) for x in self.utilization],
            "log": self.log,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _expand(entities: Sequence[Entity], inst: HybridInstance | None) -> tuple[int, ...]:
    nodes = [entities[0].tail] if entities else []
    for e in entities:
        if e.kind == "ospf" and inst is not None:
            nodes.extend(inst.paths[e.ref].nodes[1:])
        else:
            nodes.append(e.head)
    return tuple(nodes)


def decode_and_validate(
    model: IlpModel, solution: Solution, tol: float = 1e-6, strict: bool = True
) -> Decoded:
    """Assemble each flow's selected entities into a walk and verify it.

    Detached cycles are pruned and logged. With ``strict`` the recomputed
    utilizations must match the solution within ``tol``.
    """
    inst = model.instance
    names = model.names
    label = (lambda v: names[v]) if names else str
    messages: list[str] = []
    selection: dict[tuple[int, int], int] = {}
    if inst is not None:
        by_pair: dict[tuple[int, int], list[int]] = {}
        for var, (k, d) in model.lsa_vars.items():
            if solution.value(var) > 0.5:
                by_pair.setdefault((inst.catalog.sets[k].subdomain, d), []).append(k)
        for alpha, d in inst.lsa_destinations():
            ks = by_pair.get((alpha, d), [])
            if len(ks) != 1:
                raise DecodeError(
                    f"sub-domain {alpha}, destination {label(d)}: {len(ks)} LSA sets selected"
                )
            selection[alpha, d] = ks[0]
    sdn = inst.partition.sdn_nodes if inst is not None else None
    routes: dict[int, FlowRoute] = {}
    caps = model.capacities
    util = np.array(model.base_utilization, dtype=float)
    pruned_util = np.zeros(model.n_links)
    for fid, ents in model.entities.items():
        f = model.flows[fid]
        chosen = [e for e in ents if solution.value(e.var) > 0.5]
        where = f"flow {fid} ({label(f.src)}->{label(f.dst)})"
        out: dict[int, list[Entity]] = {}
        for e in chosen:
            out.setdefault(e.tail, []).append(e)
        if any(e.head == f.src for e in chosen):
            raise DecodeError(f"{where}: an entity enters the source")
        walk: list[Entity] = []
        used: set[str] = set()
        node, visited = f.src, {f.src}
        while node != f.dst:
            cands = out.get(node, [])
            if len(cands) != 1:
                raise DecodeError(
                    f"{where}: node {label(node)} has {len(cands)} outgoing entities"
                )
            e = cands[0]
            if walk and walk[-1].kind == "ospf" and e.kind == "ospf":
                raise DecodeError(f"{where}: OSPF path follows OSPF path at node {label(node)}")
            if e.kind == "sdn" and sdn is not None and node not in sdn:
                raise DecodeError(f"{where}: SDN link leaves non-SDN node {label(node)}")
            if e.head in visited:
                raise DecodeError(f"{where}: node {label(e.head)} traversed twice")
            visited.add(e.head)
            walk.append(e)
            used.add(e.var)
            node = e.head
        if out.get(f.dst):
            raise DecodeError(f"{where}: an entity leaves the destination")
        rest = [e for e in chosen if e.var not in used]
        cycles = _cycles(rest, where, label)
        for cyc in cycles:
            messages.append(
                f"{where}: pruned detached cycle {' '.join(e.var for e in cyc)}"
            )
            for e in cyc:
                for li in e.links:
                    pruned_util[li] += f.demand / caps[li]
        if inst is not None:
            _check_lsa(inst, f, walk, selection, where, label)
        for e in walk:
            for li in e.links:
                util[li] += f.demand / caps[li]
        nodes = _expand(walk, inst)
        revisit = len(set(nodes)) != len(nodes)
        if revisit:
            messages.append(f"{where}: physical node revisit inside an OSPF path")
        routes[fid] = FlowRoute(fid, f.src, f.dst, f.demand, walk, nodes, cycles, revisit)
    reported = solution.utilization(model.n_links)
    err = float(np.max(np.abs(reported - pruned_util - util))) if model.n_links else 0.0
    if strict and err > tol:
        raise DecodeError(f"recomputed utilization differs from the solution by {err:.3g}")
    costs = link_costs(util)
    return Decoded(routes, util, costs, float(costs.sum()), err, selection, messages)


def _cycles(rest: list[Entity], where: str, label) -> list[list[Entity]]:
    out: dict[int, list[Entity]] = {}
    indeg: dict[int, int] = {}
    for e in rest:
        out.setdefault(e.tail, []).append(e)
        indeg[e.head] = indeg.get(e.head, 0) + 1
    for n in set(out) | set(indeg):
        if len(out.get(n, [])) != indeg.get(n, 0):
            raise DecodeError(f"{where}: stray entities at node {label(n)} do not form a cycle")
    cycles = []
    remaining = list(rest)
    while remaining:
        start = remaining[0]
        cyc = [start]
        remaining.remove(start)
        node = start.head
        while node != start.tail:
            nxt = next(e for e in remaining if e.tail == node)
            remaining.remove(nxt)
            cyc.append(nxt)
            node = nxt.head
        cycles.append(cyc)
    return cycles


def _check_lsa(inst, f, walk, selection, where, label) -> None:
    for e in walk:
        if e.kind != "ospf":
            continue
        p = inst.paths[e.ref]
        sd = inst.partition.subdomains[p.subdomain]
        if f.dst in sd.nodes:
            if p.id != inst.native_prefix(p.source, f.dst).id:
                raise DecodeError(
                    f"{where}: path {e.var} at node {label(p.source)} is not the native route"
                )
            continue
        k = selection[p.subdomain, f.dst]
        if p.id not in inst.catalog.sets[k].allowed_paths:
            raise DecodeError(
                f"{where}: path {e.var} at node {label(p.source)} is not allowed by LSA set {k}"
            )
