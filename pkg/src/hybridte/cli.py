"""``hybridte`` command line.

Exit codes: 0 ok, 1 usage, 2 data, 3 infeasible or size gate, 4 solver.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import (
    CatalogCapExceeded,
    DecodeError,
    HybridTEError,
    InfeasibleError,
    ModelError,
    PartitionError,
    SizeGateError,
    SolverError,
    TopologyError,
)
from .experiment import REGIMES, ExperimentConfig, ExperimentError, assign_capacities, run_experiment
from .lsa import LSA_MODES, METRIC_ONLY, replay_witness
from .model import HybridInstance, build_fullte_model, build_hybrid_model, write_lp
from .ospf import RoutingTable, build_entities, ospf_route_all
from .partition import (
    classify_flows,
    derive_partition,
    format_partition,
    parse_partition,
    place_sdn_nodes,
)
from .solve import decode_and_validate, link_costs, solve_exhaustive, solve_external
from .topology import Flow, Topology, load_topology, parse_demands

EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE, EXIT_SOLVER = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TopologyError(f"cannot read {path!r}: {exc.strerror}") from None


def _topology(args) -> Topology:
    topo = load_topology(args.topology)
    return topo


def _all_pairs(topo: Topology) -> list[Flow]:
    n = topo.n_nodes
    return [Flow(s, d, 1.0) for s in range(n) for d in range(n) if s != d]


# -- partition ---------------------------------------------------------------


def cmd_partition(args) -> int:
    topo = _topology(args)
    if args.sdn:
        sdn = [topo.index(n) for n in args.sdn.split(",")]
    else:
        if args.sdn_count is None:
            raise UsageError("either --sdn-count or --sdn is required")
        if not 1 <= args.sdn_count < topo.n_nodes:
            raise UsageError(f"--sdn-count must be between 1 and {topo.n_nodes - 1}")
        sdn = place_sdn_nodes(topo, args.sdn_count)
    part = derive_partition(topo, sdn)
    text = format_partition(part)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    _, inter = classify_flows(part, _all_pairs(topo))
    print(f"{len(part.subdomains)} subdomains")
    print(f"{len(inter)} inter-subdomain flows")
    if part.degenerate:
        print("warning: SDN nodes do not separate the topology", file=sys.stderr)
    return 0


# -- optimize ----------------------------------------------------------------


def _print_links(topo: Topology, util, out=sys.stdout) -> None:
    costs = link_costs(util)
    out.write("link endpoints capacity utilization cost\n")
    for link, u, c in zip(topo.links, util, costs):
        ends = f"{topo.names[link.u]}-{topo.names[link.v]}"
        flag = " overloaded" if u > 1 else ""
        out.write(f"{topo.link_label(link)} {ends} {link.capacity:g} {u:.6f} {c:.6f}{flag}\n")


def cmd_optimize(args) -> int:
    topo = _topology(args)
    flows = parse_demands(_read(args.demands), topo)
    if args.partition:
        part = parse_partition(_read(args.partition), topo)
    else:
        part = derive_partition(topo, topo.sdn_nodes)
    if not topo.capacities_assigned:
        if not args.capacities_from_ospf:
            raise ModelError("link capacities are unassigned (use --capacities-from-ospf)")
        topo = topo.with_capacities(assign_capacities(ospf_route_all(topo, flows).loads))
    part = derive_partition(topo, part.sdn_nodes)
    table = RoutingTable(topo)
    names = topo.names

    if args.mode == "ospf":
        routing = ospf_route_all(topo, flows, table)
        util = routing.loads / [l.capacity for l in topo.links]
        print(f"objective {float(link_costs(util).sum())!r}")
        _print_links(topo, util)
        for f, nodes in zip(flows, routing.paths):
            print(f"route {names[f.src]} {names[f.dst]} {'-'.join(names[v] for v in nodes)}")
        return 0

    if args.mode == "hybrid":
        inst = HybridInstance.build(topo, part, flows, args.lsa_mode, table=table)
        if args.dump_lsa:
            Path(args.dump_lsa).write_text(inst.catalog.dump(names), encoding="utf-8", newline="\n")
        model = build_hybrid_model(inst, entity_continuity=args.entity_continuity)
    else:
        if args.oracle:
            raise UsageError("--oracle is only available for --mode hybrid")
        model = build_fullte_model(topo, flows)

    if args.emit_lp:
        out = Path(args.emit_lp)
        out.mkdir(parents=True, exist_ok=True)
        write_lp(model, out / "model.lp")
        print(f"wrote {out / 'model.lp'}")
        return 0
    if args.oracle:
        sol = solve_exhaustive(model)
    else:
        if not args.solver_cmd:
            raise UsageError("--solver-cmd is required unless --oracle or --emit-lp is given")
        sol = solve_external(model, args.solver_cmd, args.workdir, args.timeout)
    decoded = decode_and_validate(model, sol)
    if args.workdir:
        Path(args.workdir).mkdir(parents=True, exist_ok=True)
        (Path(args.workdir) / "decode.json").write_text(
            decoded.to_json(names), encoding="utf-8", newline="\n"
        )
    for line in decoded.log:
        print(f"note: {line}", file=sys.stderr)
    print(f"objective {decoded.objective!r}")
    _print_links(topo, decoded.utilization)
    routed = set(decoded.routes)
    if model.kind == "hybrid":
        for fid in model.instance.intra:
            f = flows[fid]
            nodes = table.path(f.src, f.dst)
            print(f"route {names[f.src]} {names[f.dst]} {'-'.join(names[v] for v in nodes)} ospf")
    for fid in sorted(routed):
        r = decoded.routes[fid]
        walk = "-".join(names[v] for v in r.nodes)
        print(f"route {names[r.src]} {names[r.dst]} {walk} {r.describe(names)}")
    return 0


# -- experiment --------------------------------------------------------------


def cmd_experiment(args) -> int:
    topo = _topology(args)
    regimes = tuple(args.regimes.split(",")) if args.regimes else REGIMES
    unknown = [r for r in regimes if r not in REGIMES]
    if unknown:
        raise UsageError(f"unknown regime(s): {', '.join(unknown)}")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if any(r != "ospf" for r in regimes) and not args.solver_cmd:
        raise UsageError("--solver-cmd is required for the hybrid and fullte regimes")
    if not 1 <= args.sdn_count < topo.n_nodes:
        raise UsageError(f"--sdn-count must be between 1 and {topo.n_nodes - 1}")
    out = Path(args.out)
    config = ExperimentConfig(
        solver_command=args.solver_cmd,
        lsa_mode=args.lsa_mode,
        low=args.low,
        high=args.high,
        regimes=regimes,
        artifacts=str(out) if args.keep_artifacts else None,
        timeout=args.timeout,
    )
    report = run_experiment(topo, args.sdn_count, args.trials, args.seed, config, args.workers)
    report.write(out, timings=args.timings)
    ok = len(report.successful)
    print(f"{ok} of {len(report.trials)} trials succeeded")
    for r in report.regimes:
        if r != "ospf":
            print(f"saving {r} {100 * report.saving(r):.2f}%")
    print(f"report written to {out}")
    return 0


# -- validate ----------------------------------------------------------------


def cmd_validate(args) -> int:
    topo = _topology(args)
    print(f"nodes {topo.n_nodes}")
    print(f"links {len(topo.links)}")
    if args.partition:
        part = parse_partition(_read(args.partition), topo)
    elif args.sdn_count:
        part = derive_partition(topo, place_sdn_nodes(topo, args.sdn_count))
    else:
        part = derive_partition(topo, topo.sdn_nodes)
    print(f"sdn {' '.join(topo.names[s] for s in sorted(part.sdn_nodes)) or '-'}")
    print(f"subdomains {len(part.subdomains)}{' (degenerate)' if part.degenerate else ''}")
    paths, sdn_links = build_entities(part.topology, part)
    print(f"ospf_paths {len(paths)}")
    print(f"sdn_links {len(sdn_links)}")
    if not part.degenerate:
        from .lsa import enumerate_lsa_sets

        catalog = enumerate_lsa_sets(part, paths, args.lsa_mode, table=RoutingTable(part.topology))
        bad = 0
        for k in catalog.sets:
            if k.realizable:
                replay = replay_witness(part, k)
                bad += any(replay[s] != (b, True) for s, b in k.mapping)
        print(f"lsa_sets {len(catalog.sets)}")
        print(f"witness_failures {bad}")
    if args.demands:
        flows = parse_demands(_read(args.demands), topo)
        intra, inter = classify_flows(part, flows)
        print(f"flows {len(flows)} intra {len(intra)} inter {len(inter)}")
    print(f"capacities {'assigned' if topo.capacities_assigned else 'unassigned'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hybridte", description="Hybrid SDN/OSPF traffic engineering.")
    ap.add_argument("--version", action="version", version=f"hybridte {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("partition", help="place SDN nodes and write the sub-domain partition")
    p.add_argument("--topology", required=True, help="file or builtin name (atlanta, polska, ring6)")
    p.add_argument("--sdn-count", type=int)
    p.add_argument("--sdn", help="comma-separated SDN node names instead of placement")
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("optimize", help="route a demand set with one regime")
    p.add_argument("--topology", required=True)
    p.add_argument("--partition", help="partition file; default uses the topology's SDN flags")
    p.add_argument("--demands", required=True, help="CSV src,dst,demand_gbps")
    p.add_argument("--mode", choices=REGIMES, default="hybrid")
    p.add_argument("--lsa-mode", choices=LSA_MODES, default=METRIC_ONLY)
    p.add_argument("--solver-cmd")
    p.add_argument("--emit-lp", metavar="DIR", help="write DIR/model.lp and stop")
    p.add_argument("--oracle", action="store_true", help="exhaustive oracle (tiny instances)")
    p.add_argument("--entity-continuity", action="store_true",
                   help="per-entity continuity equalities instead of node conservation")
    p.add_argument("--dump-lsa", metavar="FILE")
    p.add_argument("--workdir", help="keep model.lp, solution.out and decode.json here")
    p.add_argument("--capacities-from-ospf", action="store_true",
                   help="assign capacities from plain-OSPF loads when the file has none")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("experiment", help="run the randomized evaluation")
    p.add_argument("--topology", required=True)
    p.add_argument("--sdn-count", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--solver-cmd")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="report")
    p.add_argument("--lsa-mode", choices=LSA_MODES, default=METRIC_ONLY)
    p.add_argument("--regimes", help="comma list out of ospf,hybrid,fullte")
    p.add_argument("--low", type=float, default=1.0)
    p.add_argument("--high", type=float, default=7.0)
    p.add_argument("--keep-artifacts", action="store_true", help="write trial_<i>/ solver files")
    p.add_argument("--timings", action="store_true", help="also write timings.csv")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", help="check inputs and print entity counts")
    p.add_argument("--topology", required=True)
    p.add_argument("--partition")
    p.add_argument("--sdn-count", type=int)
    p.add_argument("--demands")
    p.add_argument("--lsa-mode", choices=LSA_MODES, default=METRIC_ONLY)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hybridte: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, SizeGateError) as exc:
        print(f"hybridte: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, DecodeError, ExperimentError) as exc:
        print(f"hybridte: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (TopologyError, PartitionError, ModelError, CatalogCapExceeded) as exc:
        print(f"hybridte: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HybridTEError as exc:
        print(f"hybridte: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"hybridte: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
