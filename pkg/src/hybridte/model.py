"""Hybrid SDN/OSPF load-balancing ILP, the Full-TE reference ILP, LP text I/O.

Variable names::

    Rp_f<fid>_p<pid>   OSPF path p used by flow f
    Rl_f<fid>_l<lid>   SDN link (or directed arc in Full-TE) used by flow f
    LSA_k<kid>_d<did>  LSA set k advertised for destination d
    U_l<lid>           utilization of link l
    COST_l<lid>        utilization cost of link l
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ModelError
from .lsa import DEFAULT_CAP, METRIC_ONLY, LsaCatalog, enumerate_lsa_sets
from .ospf import (
    OspfPath,
    RoutingTable,
    SdnLink,
    build_entities,
    capacity_vector,
    intra_utilization,
)
from .partition import Partition, classify_flows
from .topology import Flow, Topology

# (gradient, intercept) of y_i(U) = a*U - b
COST_LINES: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (1.0, 0.6),
    (2.0, 1.25),
    (4.0, 2.65),
    (8.0, 5.65),
    (16.0, 12.05),
    (32.0, 25.65),
    (64.0, 54.45),
    (128.0, 115.25),
)


@dataclass(frozen=True)
class CostFunction:
    """Convex piecewise-linear link cost, zero up to 60% utilization."""

    lines: tuple[tuple[float, float], ...] = COST_LINES

    def __call__(self, utilization: float) -> float:
        return max(0.0, max(a * utilization - b for a, b in self.lines))

    def line(self, i: int, utilization: float) -> float:
        a, b = self.lines[i]
        return a * utilization - b

    @property
    def breakpoints(self) -> list[float]:
        return [0.55 + 0.05 * (i + 1) for i in range(len(self.lines) - 1)]

    def total(self, utilizations: Iterable[float]) -> float:
        return float(sum(self(u) for u in utilizations))


COST = CostFunction()


def cost(utilization: float) -> float:
    return COST(utilization)


# -- model containers --------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[float, str], ...]
    sense: str  # "=", "<=", ">="
    rhs: float


@dataclass(frozen=True)
class Entity:
    """A routing variable: OSPF path or SDN link/arc, bound to one flow."""

    var: str
    kind: str  # "ospf" | "sdn"
    ref: int  # path id or SDN link id
    flow: int
    tail: int
    head: int
    links: tuple[int, ...]


@dataclass
class IlpModel:
    name: str
    binaries: list[str] = field(default_factory=list)
    continuous: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: list[tuple[float, str]] = field(default_factory=list)
    kind: str = "hybrid"
    # decoding context
    entities: dict[int, list[Entity]] = field(default_factory=dict)
    flows: dict[int, Flow] = field(default_factory=dict)
    lsa_vars: dict[str, tuple[int, int]] = field(default_factory=dict)
    n_links: int = 0
    base_utilization: np.ndarray | None = None
    capacities: np.ndarray | None = None
    names: tuple[str, ...] = ()
    instance: "HybridInstance | None" = None

    def variables(self) -> list[str]:
        return self.binaries + self.continuous

    def add(self, name: str, terms: Sequence[tuple[float, str]], sense: str, rhs: float) -> None:
        merged: dict[str, float] = {}
        for coef, var in terms:
            merged[var] = merged.get(var, 0.0) + coef
        terms = tuple((c, v) for v, c in merged.items() if c != 0)
        self.constraints.append(Constraint(name, terms, sense, float(rhs)))

    def counts(self) -> dict[str, int]:
        families: dict[str, int] = {}
        for c in self.constraints:
            fam = c.name.split("_", 1)[0]
            families[fam] = families.get(fam, 0) + 1
        return {
            "binaries": len(self.binaries),
            "routing_binaries": sum(1 for v in self.binaries if v.startswith("R")),
            "lsa_binaries": sum(1 for v in self.binaries if v.startswith("LSA")),
            "continuous": len(self.continuous),
            "constraints": len(self.constraints),
            **{f"family_{k}": v for k, v in sorted(families.items())},
        }


def rp(fid: int, pid: int) -> str:
    return f"Rp_f{fid}_p{pid}"


def rl(fid: int, lid: int) -> str:
    return f"Rl_f{fid}_l{lid}"


def lsa_var(kid: int, did: int) -> str:
    return f"LSA_k{kid}_d{did}"


def u_var(lid: int) -> str:
    return f"U_l{lid}"


def cost_var(lid: int) -> str:
    return f"COST_l{lid}"


# -- hybrid instance ---------------------------------------------------------


@dataclass
class HybridInstance:
    """Everything the hybrid model and its oracle are built from."""

    topology: Topology
    partition: Partition
    flows: list[Flow]
    paths: list[OspfPath]
    sdn_links: list[SdnLink]
    catalog: LsaCatalog
    inter: list[int]
    intra: list[int]
    base_utilization: np.ndarray
    table: RoutingTable
    _by_endpoints: dict[tuple[int, int], OspfPath] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        topology: Topology,
        partition: Partition,
        flows: Sequence[Flow],
        lsa_mode: str = METRIC_ONLY,
        cap: int = DEFAULT_CAP,
        table: RoutingTable | None = None,
    ) -> "HybridInstance":
        topology = partition.topology
        for f in flows:
            if not (0 <= f.src < topology.n_nodes and 0 <= f.dst < topology.n_nodes):
                raise ModelError(f"flow endpoints outside topology: {f}")
        table = table or RoutingTable(topology)
        paths, sdn_links = build_entities(topology, partition)
        catalog = enumerate_lsa_sets(partition, paths, lsa_mode, cap, table)
        flows = list(flows)
        intra_flows, _ = classify_flows(partition, flows)
        intra_ids = {id(f) for f in intra_flows}
        inter = [i for i, f in enumerate(flows) if id(f) not in intra_ids]
        intra = [i for i, f in enumerate(flows) if id(f) in intra_ids]
        u = intra_utilization(topology, partition, intra_flows, table)
        inst = cls(topology, partition, flows, paths, sdn_links, catalog, inter, intra, u, table)
        inst._by_endpoints = {(p.source, p.target): p for p in paths}
        return inst

    def path_between(self, source: int, target: int) -> OspfPath:
        return self._by_endpoints[source, target]

    def native_prefix(self, source: int, destination: int) -> OspfPath:
        """OSPF path from ``source`` to the first SDN node (or destination)
        on its plain least-cost route."""
        nodes = self.table.path(source, destination)
        end = next(v for v in nodes[1:] if v == destination or v in self.partition.sdn_nodes)
        return self.path_between(source, end)

    def relevant_paths(self, fid: int) -> list[tuple[OspfPath, bool]]:
        """Paths flow ``fid`` may use, each with whether it is LSA-gated.

        Outside the destination's sub-domains every border-terminal path is
        a candidate, gated by the advertised LSA set. Inside a sub-domain that
        contains the destination, routing follows real advertisements, so
        each internal node has exactly its plain-OSPF prefix.
        """
        d = self.flows[fid].dst
        out: list[tuple[OspfPath, bool]] = []
        for sd in self.partition.subdomains:
            if d in sd.nodes:
                for t in sd.sorted_internal():
                    if t != d:
                        out.append((self.native_prefix(t, d), False))
            else:
                out.extend(
                    (p, True)
                    for p in self.paths
                    if p.subdomain == sd.index and p.target in sd.border_nodes
                )
        out.sort(key=lambda item: item[0].id)
        return out

    def lsa_destinations(self) -> list[tuple[int, int]]:
        """(sub-domain, external destination) pairs needing one LSA set."""
        pairs = []
        for sd in self.partition.subdomains:
            if not sd.border_nodes:
                continue
            for d in range(self.topology.n_nodes):
                if d not in sd.nodes:
                    pairs.append((sd.index, d))
        return pairs


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


def _utilization_rows(
    model: IlpModel, caps: np.ndarray, base: np.ndarray, n_links: int
) -> None:
    model.capacities = caps
    per_link: list[dict[str, float]] = [dict() for _ in range(n_links)]
    for fid, ents in model.entities.items():
        demand = model.flows[fid].demand
        for e in ents:
            for li in e.links:
                per_link[li][e.var] = per_link[li].get(e.var, 0.0) + demand / caps[li]
    for li in range(n_links):
        terms = [(1.0, u_var(li))] + [(-c, v) for v, c in per_link[li].items()]
        model.add(f"C9_l{li}", terms, "=", base[li])
    for li in range(n_links):
        for i, (a, b) in enumerate(COST_LINES):
            if i == 0:
                continue  # y_0 = 0 is the lower bound of COST
            model.add(f"C10_l{li}_i{i}", [(1.0, cost_var(li)), (-a, u_var(li))], ">=", -b)
    model.continuous.extend(u_var(li) for li in range(n_links))
    model.continuous.extend(cost_var(li) for li in range(n_links))
    model.objective = [(1.0, cost_var(li)) for li in range(n_links)]


def _flow_rows(model: IlpModel, fid: int, flow: Flow, ents: list[Entity], sdn: frozenset[int],
               literal: bool) -> None:
    s, d = flow.src, flow.dst
    out: dict[int, list[Entity]] = {}
    inc: dict[int, list[Entity]] = {}
    for e in ents:
        out.setdefault(e.tail, []).append(e)
        inc.setdefault(e.head, []).append(e)
    one = lambda es: [(1.0, e.var) for e in es]  # noqa: E731
    model.add(f"C1_f{fid}", one(out.get(s, [])), "=", 1)
    model.add(f"C2_f{fid}", one(inc.get(d, [])), "=", 1)
    nodes = sorted(set(out) | set(inc))
    for n in nodes:
        if n in (s, d):
            continue
        ins, outs = inc.get(n, []), out.get(n, [])
        if not literal:
            model.add(f"C3_f{fid}_n{n}", one(ins) + [(-1.0, e.var) for e in outs], "=", 0)
            in_paths = [e for e in ins if e.kind == "ospf"]
            out_paths = [e for e in outs if e.kind == "ospf"]
            if in_paths and out_paths:
                model.add(f"C4_f{fid}_n{n}", one(in_paths) + one(out_paths), "<=", 1)
        model.add(f"C5_f{fid}_n{n}", one(ins) + one(outs), "<=", 2)
    if literal:
        # per entity: R_x - dst(f, head) = sum of admissible successors
        for e in ents:
            n = e.head
            follow = [x for x in out.get(n, []) if x.kind == "sdn" or e.kind == "sdn"]
            name = "C3" if e.kind == "ospf" else "C4"
            model.add(
                f"{name}_f{fid}_x{e.var}",
                [(1.0, e.var)] + [(-1.0, x.var) for x in follow],
                "=",
                1 if n == d else 0,
            )
    c6 = one({e.var: e for e in inc.get(s, []) + out.get(d, [])}.values())
    if c6:
        model.add(f"C6_f{fid}", c6, "=", 0)


def build_hybrid_model(instance: HybridInstance, entity_continuity: bool = False) -> IlpModel:
    """Assemble the hybrid ILP over the inter-sub-domain flows of ``instance``.

    Routing continuity uses node-level entity conservation plus a ban on
    OSPF-path to OSPF-path transitions; ``entity_continuity`` swaps in the
    per-entity continuity equalities instead.
    """
    topo = instance.topology
    caps = capacity_vector(topo)
    model = IlpModel(name="hybrid", kind="hybrid", n_links=len(topo.links),
                     base_utilization=instance.base_utilization, instance=instance,
                     names=topo.names)
    catalog = instance.catalog
    sdn = instance.partition.sdn_nodes
    lsa_pairs = instance.lsa_destinations()
    for alpha, d in lsa_pairs:
        if not catalog.for_subdomain(alpha):
            raise ModelError(f"missing lsa table for sub-domain {alpha}")
    gated_rows = []
    for fid in instance.inter:
        flow = instance.flows[fid]
        ents: list[Entity] = []
        for p, gated in instance.relevant_paths(fid):
            e = Entity(rp(fid, p.id), "ospf", p.id, fid, p.source, p.target, p.links)
            ents.append(e)
            if gated:
                gated_rows.append((fid, flow.dst, p, e))
        for l in instance.sdn_links:
            ents.append(Entity(rl(fid, l.id), "sdn", l.id, fid, l.source, l.target, (l.link,)))
        model.entities[fid] = ents
        model.flows[fid] = flow
        model.binaries.extend(e.var for e in ents)
    used_dest = sorted({d for _, d in lsa_pairs})
    for k in catalog.sets:
        for d in used_dest:
            if (k.subdomain, d) in set(lsa_pairs):
                name = lsa_var(k.id, d)
                model.lsa_vars[name] = (k.id, d)
    # deterministic order: by (k, d)
    lsa_names = sorted(model.lsa_vars, key=lambda v: model.lsa_vars[v])
    model.binaries.extend(lsa_names)
    for fid in instance.inter:
        _flow_rows(model, fid, instance.flows[fid], model.entities[fid], sdn, entity_continuity)
    for fid, d, p, e in gated_rows:
        allowing = [k.id for k in catalog.for_subdomain(p.subdomain) if p.id in k.allowed_paths]
        model.add(
            f"C7_f{fid}_p{p.id}",
            [(1.0, e.var)] + [(-1.0, lsa_var(k, d)) for k in allowing],
            "<=",
            0,
        )
    for alpha, d in lsa_pairs:
        terms = [(1.0, lsa_var(k.id, d)) for k in catalog.for_subdomain(alpha)]
        model.add(f"C8_a{alpha}_d{d}", terms, "=", 1)
    _utilization_rows(model, caps, instance.base_utilization, len(topo.links))
    return model


def all_arcs(topology: Topology) -> list[SdnLink]:
    """Directed arcs as if every node were SDN-capable."""
    arcs = []
    for u in range(topology.n_nodes):
        for v, link in topology.neighbors(u):
            arcs.append(SdnLink(len(arcs), u, v, link.index))
    return arcs


def build_fullte_model(topology: Topology, flows: Sequence[Flow]) -> IlpModel:
    """Unsplittable single-path routing of every flow over directed arcs."""
    caps = capacity_vector(topology)
    for f in flows:
        if not (0 <= f.src < topology.n_nodes and 0 <= f.dst < topology.n_nodes):
            raise ModelError(f"flow endpoints outside topology: {f}")
    arcs = all_arcs(topology)
    model = IlpModel(name="fullte", kind="fullte", n_links=len(topology.links),
                     base_utilization=np.zeros(len(topology.links)), names=topology.names)
    for fid, flow in enumerate(flows):
        ents = [Entity(rl(fid, a.id), "sdn", a.id, fid, a.source, a.target, (a.link,))
                for a in arcs]
        model.entities[fid] = ents
        model.flows[fid] = flow
        model.binaries.extend(e.var for e in ents)
    for fid, flow in enumerate(flows):
        _flow_rows(model, fid, flow, model.entities[fid], frozenset(), False)
    _utilization_rows(model, caps, model.base_utilization, len(topology.links))
    return model


# -- LP text -----------------------------------------------------------------

_TERMS_PER_LINE = 8
_LINE_WIDTH = 100  # well below the 255-character limit of CPLEX LP readers


def _expr(terms: Sequence[tuple[float, str]]) -> list[str]:
    chunks = []
    for coef, var in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        chunks.append(f"{sign} {var}" if mag == 1 else f"{sign} {_fmt(mag)} {var}")
    lines: list[str] = []
    for chunk in chunks:
        if lines and len(lines[-1]) + 1 + len(chunk) <= _LINE_WIDTH:
            lines[-1] += " " + chunk
        else:
            lines.append(chunk)
    return lines


def write_lp(model: IlpModel, sink: TextIO | str | Path) -> str:
    """Write ``model`` in CPLEX LP format (ASCII, LF endings) and return the text."""
    buf = io.StringIO()
    w = buf.write
    w(f"\\ model {model.name}\n")
    w("Minimize\n")
    obj = _expr(model.objective) if model.objective else ["0 " + model.variables()[0]]
    w(f" obj: {obj[0]}\n")
    for line in obj[1:]:
        w(f"   {line}\n")
    w("Subject To\n")
    for c in model.constraints:
        if not c.terms:
            continue
        lines = _expr(c.terms)
        w(f" {c.name}: {lines[0]}")
        for line in lines[1:]:
            w(f"\n   {line}")
        w(f" {c.sense} {_fmt(c.rhs)}\n")
    w("Bounds\n")
    for v in model.continuous:
        w(f" {v} >= 0\n")
    if model.binaries:
        w("Binary\n")
        for i in range(0, len(model.binaries), _TERMS_PER_LINE):
            w(" " + " ".join(model.binaries[i : i + _TERMS_PER_LINE]) + "\n")
    w("End\n")
    text = buf.getvalue()
    text.encode("ascii")
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    elif sink is not None:
        sink.write(text)
    return text


_SECTION = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "end": "end",
}
_TERM_RE = re.compile(r"([+-])?\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][\w.\[\]]*)")


def _parse_expr(text: str) -> list[tuple[float, str]]:
    terms = []
    for sign, num, var in _TERM_RE.findall(text):
        coef = float(num) if num else 1.0
        terms.append((-coef if sign == "-" else coef, var))
    return terms


def read_lp(text: str) -> IlpModel:
    """Parse LP text of the subset produced by :func:`write_lp`."""
    model = IlpModel(name="parsed")
    section = None
    statements: list[tuple[str, str]] = []
    current = ""
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTION:
            if current:
                statements.append((section, current))
            current = ""
            section = _SECTION[key]
            continue
        if section in ("obj", "st"):
            # a new statement begins with "name:" unless it continues an expression
            if re.match(r"^[A-Za-z_][\w.]*\s*:", line) and current:
                statements.append((section, current))
                current = line
            else:
                current = f"{current} {line}".strip()
        else:
            statements.append((section, line))
    if current:
        statements.append((section, current))
    seen_vars: dict[str, None] = {}
    for section, stmt in statements:
        if section == "obj":
            body = stmt.split(":", 1)[1] if ":" in stmt else stmt
            model.objective = _parse_expr(body)
            for _, v in model.objective:
                seen_vars.setdefault(v)
        elif section == "st":
            name, body = stmt.split(":", 1)
            m = re.match(r"^(.*?)(<=|>=|=<|=>|=|<|>)\s*([-+]?[\d.eE+-]+)\s*$", body)
            if m is None:
                raise ModelError(f"cannot parse constraint {name.strip()!r}")
            sense = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(m.group(2), m.group(2))
            terms = _parse_expr(m.group(1))
            for _, v in terms:
                seen_vars.setdefault(v)
            model.add(name.strip(), terms, sense, float(m.group(3)))
        elif section == "bin":
            model.binaries.extend(stmt.split())
    bins = set(model.binaries)
    model.continuous = [v for v in seen_vars if v not in bins]
    return model
