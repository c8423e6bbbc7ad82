"""Monte Carlo evaluation: plain OSPF vs hybrid vs Full-TE over random demands."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import HybridTEError
from .lsa import METRIC_ONLY
from .model import HybridInstance, build_fullte_model, build_hybrid_model
from .ospf import RoutingTable, ospf_route_all, path_links
from .partition import Partition, derive_partition, place_sdn_nodes
from .solve import decode_and_validate, link_costs, ospf_point, solve_external
from .topology import Topology, full_mesh_flows

log = logging.getLogger(__name__)

REGIMES = ("ospf", "hybrid", "fullte")
CAPACITY_STEPS = (10.0, 40.0, 100.0, 400.0)
BIN_WIDTH = 0.05
N_BINS = 20
MAX_FAILED_FRACTION = 0.05
ORDER_TOL = 1e-6


class ExperimentError(HybridTEError):
    """Too many trials failed, or none succeeded."""


def capacity_for(load: float) -> tuple[float, bool]:
    """Smallest standard capacity covering ``load``; beyond 400 use multiples of 400."""
    for c in CAPACITY_STEPS:
        if load <= c:
            return c, False
    return 400.0 * math.ceil(load / 400.0), True


def assign_capacities(loads: Sequence[float]) -> list[float]:
    return [capacity_for(float(x))[0] for x in loads]


def trial_seed(base_seed: int, index: int) -> list[int]:
    """Independent per-trial stream: seed sequence entropy ``[base_seed, index]``."""
    return [int(base_seed), int(index)]


@dataclass
class ExperimentConfig:
    solver_command: str | None = None
    lsa_mode: str = METRIC_ONLY
    low: float = 1.0
    high: float = 7.0
    regimes: tuple[str, ...] = REGIMES
    artifacts: str | None = None
    timeout: float | None = None


@dataclass
class RegimeResult:
    utilization: list[float]
    cost: float
    wall_time: float = 0.0
    solver_objective: float | None = None
    corrected: bool = False


@dataclass
class TrialResult:
    index: int
    regimes: dict[str, RegimeResult] = field(default_factory=dict)
    n_inter: int = 0
    capacity_extended: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _loop_free(nodes: Sequence[int]) -> list[int]:
    out: list[int] = []
    pos: dict[int, int] = {}
    for v in nodes:
        if v in pos:
            for w in out[pos[v] + 1 :]:
                del pos[w]
            del out[pos[v] + 1 :]
        else:
            pos[v] = len(out)
            out.append(v)
    return out


def run_trial(
    topology: Topology,
    partition: Partition,
    seed: int | Sequence[int],
    config: ExperimentConfig,
    index: int = 0,
) -> TrialResult:
    """One draw of demands, capacities from OSPF loads, then each regime."""
    result = TrialResult(index)
    try:
        _run_trial(topology, partition, seed, config, result)
    except HybridTEError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        log.warning("trial %d failed: %s", index, result.error)
    return result


def _run_trial(topology, partition, seed, config, result) -> None:
    flows = full_mesh_flows(topology, seed, config.low, config.high)
    table = RoutingTable(topology)
    base = ospf_route_all(topology, flows, table)
    caps = []
    for load in base.loads:
        c, extended = capacity_for(float(load))
        caps.append(c)
        result.capacity_extended += int(extended)
    topo = topology.with_capacities(caps)
    cap_arr = np.array(caps)
    part = derive_partition(topo, partition.sdn_nodes)
    table = RoutingTable(topo)
    ospf_util = base.loads / cap_arr
    ospf_cost = float(link_costs(ospf_util).sum())
    result.regimes["ospf"] = RegimeResult(ospf_util.tolist(), ospf_cost)
    artifacts = Path(config.artifacts) / f"trial_{result.index}" if config.artifacts else None

    hybrid_routes = None
    if "hybrid" in config.regimes:
        started = time.perf_counter()
        inst = HybridInstance.build(topo, part, flows, config.lsa_mode, table=table)
        result.n_inter = len(inst.inter)
        model = build_hybrid_model(inst)
        workdir = artifacts / "hybrid" if artifacts else None
        sol = solve_external(model, config.solver_command, workdir, config.timeout)
        decoded = decode_and_validate(model, sol)
        if workdir is not None:
            (workdir / "decode.json").write_text(decoded.to_json(topo.names), encoding="utf-8")
        util, cost_h, corrected = decoded.utilization, decoded.objective, False
        injected = ospf_point(model)
        if injected.objective < cost_h - ORDER_TOL:
            # solver stopped within its gap above a known feasible point
            util, cost_h, corrected = ospf_util, injected.objective, True
        hybrid_routes = {fid: r.nodes for fid, r in decoded.routes.items()} if not corrected else {}
        result.regimes["hybrid"] = RegimeResult(
            np.asarray(util).tolist(), float(cost_h), time.perf_counter() - started,
            sol.objective, corrected,
        )

    if "fullte" in config.regimes:
        started = time.perf_counter()
        model = build_fullte_model(topo, flows)
        workdir = artifacts / "fullte" if artifacts else None
        sol = solve_external(model, config.solver_command, workdir, config.timeout)
        decoded = decode_and_validate(model, sol)
        if workdir is not None:
            (workdir / "decode.json").write_text(decoded.to_json(topo.names), encoding="utf-8")
        util, cost_f, corrected = decoded.utilization, decoded.objective, False
        if "hybrid" in result.regimes:
            # the hybrid routing, with loops cut, is a Full-TE feasible point
            alt = np.zeros(len(caps))
            for fid, f in enumerate(flows):
                nodes = hybrid_routes.get(fid) if hybrid_routes else None
                nodes = _loop_free(nodes) if nodes else table.path(f.src, f.dst)
                for li in path_links(topo, nodes):
                    alt[li] += f.demand / cap_arr[li]
            alt_cost = float(link_costs(alt).sum())
            if alt_cost < cost_f - ORDER_TOL:
                util, cost_f, corrected = alt, alt_cost, True
        result.regimes["fullte"] = RegimeResult(
            np.asarray(util).tolist(), float(cost_f), time.perf_counter() - started,
            sol.objective, corrected,
        )


def _trial_job(args):
    topology, partition, base_seed, index, config = args
    return run_trial(topology, partition, trial_seed(base_seed, index), config, index)


@dataclass
class Report:
    topology: str
    sdn_nodes: list[str]
    n_subdomains: int
    trials: list[TrialResult]
    base_seed: int
    regimes: tuple[str, ...]
    config: ExperimentConfig

    @property
    def successful(self) -> list[TrialResult]:
        return [t for t in self.trials if t.ok]

    def histogram(self, regime: str) -> list[int]:
        counts = [0] * (N_BINS + 1)
        for t in self.successful:
            for u in t.regimes[regime].utilization:
                counts[_bin(u)] += 1
        return counts

    def total_cost(self, regime: str) -> float:
        return float(sum(t.regimes[regime].cost for t in self.successful))

    def saving(self, regime: str) -> float:
        base = self.total_cost("ospf")
        return 0.0 if base <= 0 else 1.0 - self.total_cost(regime) / base

    def mean_trial_saving(self, regime: str) -> float:
        vals = [
            1.0 - t.regimes[regime].cost / t.regimes["ospf"].cost
            for t in self.successful
            if t.regimes["ospf"].cost > 0
        ]
        return float(np.mean(vals)) if vals else 0.0

    def heavy_link_trials(self, threshold: float = 0.85) -> int:
        return sum(
            1 for t in self.successful if max(t.regimes["ospf"].utilization) >= threshold
        )

    def to_dict(self) -> dict:
        ok = self.successful
        return {
            "topology": self.topology,
            "sdn_nodes": self.sdn_nodes,
            "subdomains": self.n_subdomains,
            "base_seed": self.base_seed,
            "trials": len(self.trials),
            "successful": len(ok),
            "failed": [{"trial": t.index, "error": t.error} for t in self.trials if not t.ok],
            "lsa_mode": self.config.lsa_mode,
            "demand_range_gbps": [self.config.low, self.config.high],
            "heavy_link_trials": self.heavy_link_trials(),
            "regimes": {
                r: {
                    "total_cost": self.total_cost(r),
                    "saving": self.saving(r),
                    "mean_trial_saving": self.mean_trial_saving(r),
                    "histogram": self.histogram(r),
                    "corrected_trials": sum(1 for t in ok if t.regimes[r].corrected),
                }
                for r in self.regimes
            },
            "per_trial": [
                {
                    "trial": t.index,
                    "inter_flows": t.n_inter,
                    "capacity_extended": t.capacity_extended,
                    "cost": {r: t.regimes[r].cost for r in self.regimes},
                    "solver_objective": {
                        r: t.regimes[r].solver_objective for r in self.regimes if r != "ospf"
                    },
                }
                for t in ok
            ],
        }

    def write(self, out_dir: str | Path, timings: bool = False) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        (out / "report.json").write_text(text, encoding="utf-8", newline="\n")
        for r in self.regimes:
            rows = [
                (f"{i * BIN_WIDTH:.2f}", f"{(i + 1) * BIN_WIDTH:.2f}", c)
                for i, c in enumerate(self.histogram(r)[:N_BINS])
            ]
            rows.append(("1.00", "inf", self.histogram(r)[N_BINS]))
            _write_csv(out / f"hist_{r}.csv", ("bin_low", "bin_high", "count"), rows)
        _write_csv(
            out / "savings.csv",
            ("regime", "total_cost", "saving", "mean_trial_saving"),
            [
                (r, repr(self.total_cost(r)), repr(self.saving(r)), repr(self.mean_trial_saving(r)))
                for r in self.regimes
            ],
        )
        if timings:
            _write_csv(
                out / "timings.csv",
                ("trial", "regime", "seconds"),
                [
                    (t.index, r, f"{t.regimes[r].wall_time:.3f}")
                    for t in self.successful
                    for r in self.regimes
                    if r != "ospf"
                ],
            )


def _bin(u: float) -> int:
    if u > 1.0 + 1e-12:
        return N_BINS
    # 0.6 and friends must land on the bin they start
    return min(N_BINS - 1, int(math.floor(round(u / BIN_WIDTH, 9))))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def run_experiment(
    topology: Topology,
    sdn_count: int,
    trials: int,
    base_seed: int,
    config: ExperimentConfig,
    workers: int | None = None,
    sdn_nodes: Sequence[int] | None = None,
) -> Report:
    """Run ``trials`` independent trials and aggregate them in index order."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    regimes = tuple(r for r in REGIMES if r in config.regimes)
    if "ospf" not in regimes:
        regimes = ("ospf",) + regimes
    if any(r != "ospf" for r in regimes) and not config.solver_command:
        raise ValueError("a solver command is required for the hybrid and fullte regimes")
    config = ExperimentConfig(**{**asdict(config), "regimes": regimes})
    sdn = frozenset(sdn_nodes) if sdn_nodes is not None else place_sdn_nodes(topology, sdn_count)
    partition = derive_partition(topology, sdn)
    jobs = [(topology, partition, base_seed, i, config) for i in range(trials)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or trials == 1:
        results = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
            results = list(pool.map(_trial_job, jobs))
    failed = sum(1 for r in results if not r.ok)
    if failed == trials:
        raise ExperimentError(f"all {trials} trials failed; first error: {results[0].error}")
    if failed / trials > MAX_FAILED_FRACTION:
        raise ExperimentError(f"{failed} of {trials} trials failed (limit 5%)")
    report = Report(
        topology.name,
        [topology.names[s] for s in sorted(sdn)],
        len(partition.subdomains),
        results,
        base_seed,
        regimes,
        config,
    )
    heavy = report.heavy_link_trials()
    log.info("%d of %d trials had an OSPF link at or above 85%%", heavy, len(report.successful))
    return report
