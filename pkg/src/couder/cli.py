"""Command-line entry point, file formats, and plot-data emission.

All files are UTF-8 JSON.  Traffic sequences and per-matrix metrics are
JSON Lines (one object per line) so long traces stream; everything else
is a single versioned object.  Exit codes: 0 success, 1 validation
error, 2 infeasibility, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import evaluate, optimize, round as rounding, traffic
from .errors import (InfeasibleRoutingError, InvalidInputError,
                     UnboundedThroughputError)
from .evaluate import ReconfigPolicy
from .model import (FractionalTopology, IntegerTopology, Path,
                    PhysicalTopology, RoutingWeights, TmSequence,
                    TrafficMatrix)
from .traffic import CriticalSet

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64

VERSION = 1


@dataclass
class RunConfig:
    """Tunables shared by the subcommands; flags win over the config file."""

    k: int = 5
    lookback: float = 3600.0
    ldm_iterations: int = 50
    beta_tolerance: float = 1e-3
    seed: int = 0
    boundability_mode: str = "dominated"
    step3_mode: str = "per-link"
    jobs: int = 1

    @classmethod
    def load(cls, path, overrides: dict) -> "RunConfig":
        cfg = cls()
        if path:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
            for key, value in data.items():
                setattr(cfg, key, type(getattr(cfg, key))(value))
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


# ---------------------------------------------------------------------------
# File formats


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_tm_sequence(path: str, seq: TmSequence, extra: dict = None):
    times = seq.times()
    with open(path, "w", encoding="utf-8") as fh:
        for idx, t in enumerate(seq):
            line = {"t": float(times[idx]), "tm": t.demand.tolist()}
            if extra:
                line.update({k: v[idx] for k, v in extra.items()})
            fh.write(_dump(line) + "\n")


def read_tm_sequence(path: str) -> TmSequence:
    mats = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad JSON ({exc})")
            if "tm" not in obj:
                raise InvalidInputError(f"{path}:{lineno}: missing 'tm'")
            mats.append(TrafficMatrix(np.array(obj["tm"], dtype=float),
                                      timestamp=obj.get("t")))
    if not mats:
        raise InvalidInputError(f"{path}: empty sequence")
    times = [t.timestamp for t in mats if t.timestamp is not None]
    window = 1.0
    if len(times) > 1:
        diffs = np.diff(times)
        if (diffs > 0).all():
            window = float(diffs.min())
    return TmSequence(tuple(mats), aggregation_window=window)


def write_physical_topology(path: str, phys: PhysicalTopology):
    obj = {"version": VERSION, "num_pods": phys.num_pods,
           "num_ocs": phys.num_ocs,
           "bandwidth_gbps": phys.link_bandwidth,
           "h_eg": phys.egress_ports.tolist(),
           "h_ig": phys.ingress_ports.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(obj) + "\n")


def read_physical_topology(path: str) -> PhysicalTopology:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return PhysicalTopology(int(obj["num_pods"]), int(obj["num_ocs"]),
                                np.array(obj["h_eg"], dtype=int),
                                np.array(obj["h_ig"], dtype=int),
                                float(obj.get("bandwidth_gbps", 1.0)))
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing field {exc}")


def write_critical_set(path: str, crit: CriticalSet):
    obj = {"version": VERSION, "k": len(crit), "seed": crit.seed,
           "matrices": [t.demand.tolist() for t in crit],
           "assignment": list(crit.cluster_assignment)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(obj) + "\n")


def read_critical_set(path: str) -> CriticalSet:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    mats = tuple(TrafficMatrix(np.array(m, dtype=float))
                 for m in obj["matrices"])
    return CriticalSet(mats, tuple(obj.get("assignment", ())),
                       int(obj.get("seed", 0)))


def _omega_json(omega: RoutingWeights) -> list:
    out = []
    for p in sorted(omega.weights, key=lambda q: (q.src, q.dst,
                                                  -1 if q.via is None else q.via)):
        out.append({"src": p.src, "dst": p.dst, "via": p.via,
                    "w": omega.weights[p]})
    return out


def write_solution(path: str, sol: optimize.FractionalSolution):
    obj = {"version": VERSION, "mu": sol.mu, "beta": sol.beta,
           "d": sol.d.d.tolist(), "omega": _omega_json(sol.omega)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(obj) + "\n")


def read_solution(path: str) -> optimize.FractionalSolution:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    weights = {Path(e["src"], e["dst"], e.get("via")): float(e["w"])
               for e in obj["omega"]}
    omega = RoutingWeights(weights, mu=float(obj["mu"]),
                           beta=obj.get("beta"))
    return optimize.FractionalSolution(
        FractionalTopology(np.array(obj["d"], dtype=float)), omega,
        float(obj["mu"]), obj.get("beta"))


def write_integer_topology(path: str, topo: IntegerTopology):
    obj = {"version": VERSION, "x": topo.x.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(obj) + "\n")


def read_integer_topology(path: str) -> IntegerTopology:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return IntegerTopology(np.array(obj["x"], dtype=int))


def write_plot_series(path: str, xs, ys):
    """Two-column text, one (x, y) pair per line, for any plotting tool."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{x:.10g} {y:.10g}\n")


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_extract(args, cfg: RunConfig) -> int:
    seq = read_tm_sequence(args.tm_file)
    crit = traffic.extract_critical(seq, cfg.k, cfg.seed)
    write_critical_set(args.out, crit)
    return EXIT_OK


def _cmd_optimize(args, cfg: RunConfig) -> int:
    phys = read_physical_topology(args.phys_file)
    crit = read_critical_set(args.crit_file)
    sol = optimize.run_pipeline(phys, crit, desensitized=not args.no_desensitize,
                                mode=cfg.step3_mode,
                                beta_tol=cfg.beta_tolerance)
    write_solution(args.out, sol)
    return EXIT_OK


def _cmd_round(args, cfg: RunConfig) -> int:
    phys = read_physical_topology(args.phys_file)
    sol = read_solution(args.solution_file)
    if args.method == "ldm":
        report = rounding.ldm_round(phys, sol.d, cfg.ldm_iterations)
    else:
        report = rounding.greedy_round(phys, sol.d)
    write_integer_topology(args.out, report.topo)
    print(_dump({"goodness": report.goodness,
                 "violation_ratio": report.violation_ratio,
                 "iterations_run": report.iterations_run}))
    return EXIT_OK


def _metric_line(idx, t, rec, extra=None) -> dict:
    line = {"index": idx, "t": t.timestamp, "mlu": rec.mlu, "ahc": rec.ahc,
            "direct_fraction": rec.direct_fraction, "feasible": rec.feasible}
    if extra:
        line.update(extra)
    if math.isinf(line["mlu"]):
        line["mlu"] = None  # JSON has no Infinity; null marks dead links
    return line


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    phys = read_physical_topology(args.phys_file)
    seq = read_tm_sequence(args.tm_file)
    b = phys.link_bandwidth

    if args.baseline in ("none", "direct") and not args.topology_file:
        raise InvalidInputError(f"baseline {args.baseline} needs --topology")
    if args.baseline == "none":
        if not args.solution_file:
            raise InvalidInputError("baseline none needs --solution")
        topo = read_integer_topology(args.topology_file)
        sol = read_solution(args.solution_file)
        sen = evaluate.sensitivity_map(topo, sol.omega, b)
        max_sen = float(sen[np.isfinite(sen)].max(initial=0.0))

        def run(t):
            rec = evaluate.evaluate_static(topo, sol.omega, t, b)
            return rec, {"max_sensitivity": max_sen}
    elif args.baseline == "mesh":
        mesh = evaluate.uniform_mesh(phys)

        def run(t):
            mlu, omega = evaluate.optimal_routing_mlu(mesh, t, b,
                                                      return_weights=True)
            if omega is None:
                return evaluate.EvalRecord(math.inf, 2.0,
                                           np.zeros_like(t.demand), 0.0,
                                           False), {}
            return evaluate.evaluate_static(mesh, omega, t, b), {}
    elif args.baseline == "vlb":
        mesh = evaluate.uniform_mesh(phys)
        omega = evaluate.vlb_weights(mesh)

        def run(t):
            return evaluate.evaluate_static(mesh, omega, t, b), {}
    elif args.baseline == "direct":
        topo = read_integer_topology(args.topology_file)
        omega = evaluate.direct_only_weights(topo)

        def run(t):
            return evaluate.evaluate_static(topo, omega, t, b), {}
    elif args.baseline == "fattree":
        def run(t):
            rec = evaluate.fat_tree_eval(t, phys.egress_radix, b,
                                         args.oversub)
            return rec, {}
    elif args.baseline == "ideal":
        def run(t):
            mlu = evaluate.ideal_toe_mlu(phys, t)
            rec = evaluate.EvalRecord(mlu, 1.0, np.zeros_like(t.demand),
                                      1.0, math.isfinite(mlu))
            return rec, {}
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidInputError(f"unknown baseline {args.baseline}")

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run, seq.matrices))
    else:
        results = [run(t) for t in seq]

    with open(args.out, "w", encoding="utf-8") as fh:
        for idx, (rec, extra) in enumerate(results):
            fh.write(_dump(_metric_line(idx, seq[idx], rec, extra)) + "\n")

    mlus = np.array([rec.mlu for rec, _ in results])
    finite = mlus[np.isfinite(mlus)]
    if len(finite):
        xs = np.sort(finite)
        ccdf = 1.0 - np.arange(1, len(xs) + 1) / len(xs)
        write_plot_series(args.out + ".mlu_ccdf.txt", xs, ccdf)
    ahcs = np.sort([rec.ahc for rec, _ in results])
    pct = np.arange(1, len(ahcs) + 1) / len(ahcs) * 100.0
    write_plot_series(args.out + ".ahc_pct.txt", pct, ahcs)
    return EXIT_OK


def _cmd_simulate(args, cfg: RunConfig) -> int:
    phys = read_physical_topology(args.phys_file)
    seq = read_tm_sequence(args.tm_file)
    policy = ReconfigPolicy(frequency=args.frequency,
                            stage_latency=args.stage_latency,
                            alpha_pred=args.alpha_pred,
                            lookback=cfg.lookback, k=cfg.k)
    points, epochs = evaluate.simulate_reconfig(
        phys, seq, policy, seed=cfg.seed, mode=cfg.step3_mode,
        tau_max=cfg.ldm_iterations)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ep in epochs:
            fh.write(_dump({"event": "reconfig", "t": ep.time,
                            "changed_fraction": ep.changed_fraction,
                            "stages": ep.stages, "mu": ep.mu,
                            "beta": ep.beta}) + "\n")
        for pt in points:
            line = {"t": pt.time, "mlu": pt.record.mlu, "ahc": pt.record.ahc,
                    "epoch": pt.epoch, "stage": pt.stage,
                    "feasible": pt.record.feasible}
            if math.isinf(line["mlu"]):
                line["mlu"] = None
            fh.write(_dump(line) + "\n")
    return EXIT_OK


def _cmd_synth(args, cfg: RunConfig) -> int:
    if args.mode == "storage":
        if args.pods is None or args.count is None:
            raise InvalidInputError("storage mode needs --pods and --count")
        seq = traffic.gen_storage_tms(args.pods, args.count, cfg.seed,
                                      (args.demand_min, args.demand_max))
        write_tm_sequence(args.out, seq)
    else:  # burst
        if not args.tm_file:
            raise InvalidInputError("burst mode needs --tm-file")
        seq = read_tm_sequence(args.tm_file)
        bursts = traffic.gen_burst_tms(seq, args.burst_factor,
                                       args.max_burst_pairs)
        with open(args.out, "w", encoding="utf-8") as fh:
            for idx, (burst_set, t) in enumerate(bursts):
                fh.write(_dump({"t": float(idx), "tm": t.demand.tolist(),
                                "burst_set": [list(p) for p in burst_set]})
                         + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser plumbing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="couder",
                     description="Robust topology engineering for "
                                 "optical-circuit-switched fabrics")
    parser.add_argument("--config", help="JSON config file (flags win)")
    parser.add_argument("--k", type=int, help="critical matrix count")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--lookback", type=float,
                        help="history window in seconds")
    parser.add_argument("--ldm-iterations", type=int, dest="ldm_iterations")
    parser.add_argument("--beta-tolerance", type=float, dest="beta_tolerance")
    parser.add_argument("--step3-mode", choices=["per-link", "literal"],
                        dest="step3_mode")
    parser.add_argument("--boundability-mode", choices=["exact", "dominated"],
                        dest="boundability_mode")
    parser.add_argument("--jobs", type=int,
                        default=None, help="parallel matrix evaluations "
                                           "(default: COUDER_JOBS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="cluster a sequence into criticals")
    p.add_argument("tm_file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("optimize", help="fractional topology + routing")
    p.add_argument("phys_file")
    p.add_argument("crit_file")
    p.add_argument("--out", required=True)
    p.add_argument("--no-desensitize", action="store_true")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("round", help="round onto the switch bank")
    p.add_argument("phys_file")
    p.add_argument("solution_file")
    p.add_argument("--method", choices=["ldm", "greedy"], default="ldm")
    p.add_argument("--iters", type=int, dest="ldm_iterations_flag")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_round)

    p = sub.add_parser("evaluate", help="fluid-model metrics per matrix")
    p.add_argument("phys_file")
    p.add_argument("tm_file")
    p.add_argument("--topology", dest="topology_file",
                   help="integer topology (baselines none/direct)")
    p.add_argument("--solution", dest="solution_file",
                   help="solution file (baseline none)")
    p.add_argument("--baseline", default="none",
                   choices=["none", "mesh", "vlb", "fattree", "direct",
                            "ideal"])
    p.add_argument("--oversub", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="staged-reconfiguration time series")
    p.add_argument("phys_file")
    p.add_argument("tm_file")
    p.add_argument("--frequency", type=float, required=True)
    p.add_argument("--stage-latency", type=float, default=0.0,
                   dest="stage_latency")
    p.add_argument("--alpha-pred", type=float, default=0.8,
                   dest="alpha_pred")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("synth", help="synthesize traffic sequences")
    p.add_argument("--mode", choices=["storage", "burst"], required=True)
    p.add_argument("--pods", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--demand-min", type=float, default=1.0)
    p.add_argument("--demand-max", type=float, default=100.0)
    p.add_argument("--tm-file")
    p.add_argument("--burst-factor", type=float, default=1.0)
    p.add_argument("--max-burst-pairs", type=int, default=2,
                   choices=[1, 2])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("COUDER_JOBS", "1"))
    overrides = {"k": args.k, "seed": args.seed, "lookback": args.lookback,
                 "ldm_iterations": getattr(args, "ldm_iterations_flag", None)
                 or args.ldm_iterations,
                 "beta_tolerance": args.beta_tolerance,
                 "step3_mode": args.step3_mode,
                 "boundability_mode": args.boundability_mode,
                 "jobs": jobs}
    try:
        cfg = RunConfig.load(args.config, overrides)
        return args.func(args, cfg)
    except (InvalidInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"couder: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InfeasibleRoutingError, UnboundedThroughputError) as exc:
        print(f"couder: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
