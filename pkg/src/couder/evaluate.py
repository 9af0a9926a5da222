"""Fluid-model evaluation, baseline constructions, and staged reconfiguration.

Link loads follow directly from routing weights (no queueing or packet
effects): the load on link (a, b) is the weighted demand of every path
crossing it.  MLU may exceed 1 to express congestion severity; an infinite
sentinel is reserved for demand crossing a zero-capacity link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import lp, optimize, round as rounding, traffic
from .errors import (InfeasibleRoutingError, InvalidInputError,
                     UnboundedThroughputError)
from .model import (FractionalTopology, IntegerTopology, Path,
                    PhysicalTopology, RoutingWeights, TmSequence,
                    TrafficMatrix, enumerate_paths, validate)
from .traffic import CriticalSet

Capacity = Union[IntegerTopology, FractionalTopology, np.ndarray]


@dataclass(frozen=True)
class EvalRecord:
    mlu: float
    ahc: float
    per_link_util: np.ndarray
    direct_fraction: float
    feasible: bool


@dataclass(frozen=True)
class ReconfigPolicy:
    """Timing and capacity-preservation knobs of staged reconfiguration."""

    frequency: float  # seconds between reconfigurations
    stage_latency: float = 0.0
    alpha_pred: float = 0.8  # predicted MLU of the critical set
    lookback: float = 60.0  # history used before the first reconfiguration
    k: int = 5

    def __post_init__(self):
        if not 0 < self.alpha_pred < 1:
            raise InvalidInputError("alpha_pred must lie in (0, 1)")
        if self.frequency <= 0:
            raise InvalidInputError("frequency must be positive")
        if self.stage_latency < 0 or self.lookback <= 0 or self.k < 1:
            raise InvalidInputError("invalid policy parameters")


def num_stages(p: float, alpha_pred: float) -> int:
    """Stages needed to switch a ``p`` fraction of links: ceil(p/(1-alpha)).

    No more than a 1-alpha fraction of links may be down per stage.  The
    tiny bias guards against float quotients landing just above an integer.
    """
    if not 0 < alpha_pred < 1:
        raise InvalidInputError("alpha_pred must lie in (0, 1)")
    if p < 0 or p > 1 + 1e-9:
        raise InvalidInputError("changed-link fraction must lie in [0, 1]")
    if p <= 0:
        return 0
    return max(1, math.ceil(p / (1.0 - alpha_pred) - 1e-9))


def _capacity_matrix(x: Capacity) -> np.ndarray:
    if isinstance(x, IntegerTopology):
        return x.X.astype(float)
    if isinstance(x, FractionalTopology):
        return x.d
    return np.asarray(x, dtype=float)


def _link_loads(omega: RoutingWeights, t: np.ndarray) -> np.ndarray:
    n = t.shape[0]
    direct, via = omega.arrays(n)
    load = direct * t
    # 2-hop paths: first link (src, via), second link (via, dst).
    load += np.einsum("ijk,ij->ik", via, t)
    load += np.einsum("ijk,ij->kj", via, t)
    return load


def evaluate_static(x: Capacity, omega: RoutingWeights, t: TrafficMatrix,
                    bandwidth: float = 1.0) -> EvalRecord:
    """Utilization, hop count, and feasibility of one matrix on fixed routes."""
    cap = _capacity_matrix(x) * bandwidth
    if cap.shape != t.demand.shape:
        raise InvalidInputError("topology and matrix shapes differ")
    n = t.num_pods
    load = _link_loads(omega, t.demand)
    util = np.zeros_like(load)
    positive = cap > 0
    util[positive] = load[positive] / cap[positive]
    dead = (~positive) & (load > 1e-12)
    feasible = not dead.any()
    util[dead] = math.inf
    mlu = float(util.max(initial=0.0)) if feasible else math.inf

    total = t.total
    if total > 0:
        direct, _ = omega.arrays(n)
        direct_fraction = float((direct * t.demand).sum() / total)
        direct_fraction = min(max(direct_fraction, 0.0), 1.0)
    else:
        direct_fraction = 1.0
    ahc = 1.0 + (1.0 - direct_fraction)
    return EvalRecord(mlu, ahc, util, direct_fraction, feasible)


def optimal_routing_mlu(x: Capacity, t: TrafficMatrix,
                        bandwidth: float = 1.0,
                        return_weights: bool = False):
    """Offline-optimal split: the smallest MLU any weights achieve on x."""
    cap = _capacity_matrix(x) * bandwidth
    if cap.shape != t.demand.shape:
        raise InvalidInputError("topology and matrix shapes differ")
    n = t.num_pods
    paths = enumerate_paths(n)
    model = lp.LpModel("optimal-routing")
    model.add_var("mlu", 0.0, None)

    def name(p: Path) -> str:
        return f"w_{p.src}.{p.via}.{p.dst}" if p.via is not None \
            else f"w_{p.src}.{p.dst}"

    demanded = [(i, j) for i in range(n) for j in range(n)
                if t.demand[i, j] > 0]
    usable = {}
    for (i, j) in demanded:
        ps = [p for p in paths[(i, j)]
              if all(cap[a, b] > 0 for a, b in p.links())]
        if not ps:
            return (math.inf, None) if return_weights else math.inf
        usable[(i, j)] = ps
        for p in ps:
            model.add_var(name(p), 0.0, 1.0)
        model.add_constraint({name(p): 1.0 for p in ps}, lp.EQ, 1.0)
    for a in range(n):
        for b in range(n):
            if a == b or cap[a, b] <= 0:
                continue
            terms = {}
            for (i, j), ps in usable.items():
                for p in ps:
                    if (a, b) in p.links():
                        terms[name(p)] = terms.get(name(p), 0.0) \
                            + t.demand[i, j]
            if terms:
                terms["mlu"] = -cap[a, b]
                model.add_constraint(terms, lp.LE, 0.0)
    model.set_objective("min", {"mlu": 1.0})
    sol = lp.solve(model)
    if not sol.optimal:
        return (math.inf, None) if return_weights else math.inf
    if not return_weights:
        return sol.objective_value
    weights = {}
    for (i, j), ps in usable.items():
        for p in ps:
            w = sol.values[name(p)]
            if w > 0:
                weights[p] = w
    return sol.objective_value, RoutingWeights(weights)


def ideal_toe_mlu(phys: PhysicalTopology, t: TrafficMatrix,
                  bandwidth: Optional[float] = None) -> float:
    """Per-matrix joint topology+routing optimum: the unrealizable floor."""
    if bandwidth is not None and bandwidth != phys.link_bandwidth:
        phys = PhysicalTopology(phys.num_pods, phys.num_ocs,
                                phys.egress_ports, phys.ingress_ports,
                                bandwidth)
    try:
        sol = optimize.solve_maxmin_throughput(phys, CriticalSet((t,)))
    except UnboundedThroughputError:
        return 0.0
    except InfeasibleRoutingError:
        return math.inf
    return 1.0 / sol.mu


def uniform_mesh(phys: PhysicalTopology) -> IntegerTopology:
    """Spread each pod's egress budget evenly over the other pods.

    The remainder goes round-robin to destinations in ascending order
    starting from each pod's successor (staggering keeps the extra links
    from piling onto one pod's ingress); links are then packed onto
    switches greedily within port budgets, so the result always validates.
    """
    n, M = phys.num_pods, phys.num_ocs
    want = np.zeros((n, n), dtype=int)
    for i in range(n):
        others = [(i + off) % n for off in range(1, n)]
        base, rem = divmod(int(phys.egress_radix[i]), n - 1)
        for idx, j in enumerate(others):
            want[i, j] = base + (1 if idx < rem else 0)
    x = np.zeros((M, n, n), dtype=int)
    eg_left = phys.egress_ports.copy()
    ig_left = phys.ingress_ports.copy()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for _ in range(want[i, j]):
                # One link at a time onto the switch with the most headroom
                # for this pair, so no switch strands capacity.
                headroom = np.minimum(eg_left[:, i], ig_left[:, j])
                m = int(headroom.argmax())
                if headroom[m] <= 0:
                    break
                x[m, i, j] += 1
                eg_left[m, i] -= 1
                ig_left[m, j] -= 1
    return IntegerTopology(x)


def vlb_weights(x: Capacity) -> RoutingWeights:
    """Capacity-proportional oblivious splitting over direct + 2-hop paths."""
    cap = _capacity_matrix(x)
    n = cap.shape[0]
    weights = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            caps = [(Path(i, j), cap[i, j])]
            caps.extend((Path(i, j, k), min(cap[i, k], cap[k, j]))
                        for k in range(n) if k not in (i, j))
            total = sum(c for _, c in caps)
            if total <= 0:
                weights[Path(i, j)] = 1.0
                continue
            for p, c in caps:
                if c > 0:
                    weights[p] = float(c / total)
    return RoutingWeights(weights)


def direct_only_weights(x: Capacity) -> RoutingWeights:
    """All weight on direct paths; zero-link pairs surface as infeasible."""
    n = _capacity_matrix(x).shape[0]
    return RoutingWeights({Path(i, j): 1.0
                           for i in range(n) for j in range(n) if i != j})


def fat_tree_eval(t: TrafficMatrix, pod_uplinks, bandwidth: float = 1.0,
                  oversub: float = 2.0) -> EvalRecord:
    """Abstract oversubscribed fat tree: a non-blocking spine behind
    per-pod effective capacity uplinks*b/oversub; every hop count is 2."""
    if oversub <= 0:
        raise InvalidInputError("oversubscription must be positive")
    n = t.num_pods
    up = np.broadcast_to(np.asarray(pod_uplinks, dtype=float), (n,))
    if (up <= 0).any():
        raise InvalidInputError("pod uplink counts must be positive")
    effective = up * bandwidth / oversub
    rows = t.demand.sum(axis=1)
    cols = t.demand.sum(axis=0)
    mlu = float(max((np.maximum(rows, cols) / effective).max(initial=0.0), 0.0))
    return EvalRecord(mlu, 2.0, np.zeros((n, n)), 0.0, True)


def sensitivity_map(x: Capacity, omega: RoutingWeights,
                    bandwidth: float = 1.0) -> np.ndarray:
    """Worst utilization increase per unit demand surge, per link."""
    cap = _capacity_matrix(x) * bandwidth
    n = cap.shape[0]
    sen = np.zeros((n, n))
    for p, w in omega.weights.items():
        if w <= 0:
            continue
        for a, b in p.links():
            if cap[a, b] > 0:
                sen[a, b] = max(sen[a, b], w / cap[a, b])
            else:
                sen[a, b] = math.inf
    return sen


@dataclass(frozen=True)
class EpochInfo:
    """One reconfiguration event: when, how much changed, how many stages."""

    time: float
    changed_fraction: float
    stages: int
    mu: float
    beta: Optional[float]


@dataclass(frozen=True)
class SimPoint:
    time: float
    record: EvalRecord
    epoch: int
    stage: Optional[int]  # stage index while switching, else None


def _restrict_weights(omega: RoutingWeights, cap: np.ndarray) -> RoutingWeights:
    """Drop paths crossing removed links and renormalize per pair."""
    n = cap.shape[0]
    by_pair = {}
    for p, w in omega.weights.items():
        if w <= 0:
            continue
        if all(cap[a, b] > 0 for a, b in p.links()):
            by_pair.setdefault((p.src, p.dst), []).append((p, w))
    weights = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            kept = by_pair.get((i, j))
            if not kept:
                weights[Path(i, j)] = 1.0  # stranded pair: surfaces as infeasible
                continue
            total = sum(w for _, w in kept)
            for p, w in kept:
                weights[p] = w / total
    return RoutingWeights(weights, mu=omega.mu, beta=omega.beta)


def _changing_circuits(old: np.ndarray, new: np.ndarray) -> list:
    """Old circuits that must be torn down, one entry per circuit,
    in (i, j, m) order."""
    M, n, _ = old.shape
    out = []
    for i in range(n):
        for j in range(n):
            for m in range(M):
                drop = old[m, i, j] - new[m, i, j]
                out.extend([(i, j, m)] * max(int(drop), 0))
    return out


def simulate_reconfig(phys: PhysicalTopology, seq: TmSequence,
                      policy: ReconfigPolicy, *, seed: int = 0,
                      mode: optimize.SensitivityMode = "per-link",
                      tau_max: int = 50):
    """Periodic reconfiguration over a matrix sequence.

    Criticals come from the monotonically growing history of every matrix
    seen so far; each epoch reruns the full pipeline, rounds, recomputes
    routing, and switches over in ceil(p / (1 - alpha_pred)) stages.  While
    a stage is switching, its share of the changing links is removed and
    the previous weights are renormalized onto the surviving links.

    Returns (points, epochs).
    """
    if seq.aggregation_window > policy.frequency:
        raise InvalidInputError("reconfiguration period is finer than the"
                                " matrix aggregation step")
    times = seq.times()
    t0 = times[0]
    first_epoch = t0 + policy.lookback
    points = []
    epochs = []

    current_x = None  # IntegerTopology once installed
    current_omega = None
    pending = None  # (epoch_time, stages, stage_caps, new_x, new_omega)

    def reoptimize(now: float):
        history = [seq[i] for i in range(len(seq)) if times[i] < now]
        if not history:
            return None
        crit = traffic.extract_critical(
            TmSequence(tuple(history), seq.aggregation_window),
            min(policy.k, len(history)), seed)
        frac = optimize.run_pipeline(phys, crit, mode=mode)
        report = rounding.ldm_round(phys, frac.d, tau_max)
        routed = optimize.recompute_routing(phys, report.topo, crit, mode=mode)
        return report.topo, routed

    epoch_idx = -1
    epoch_times = []
    e = first_epoch
    while e <= times[-1]:
        epoch_times.append(e)
        e += policy.frequency
    if not epoch_times:
        epoch_times = [first_epoch]

    schedule = []  # (time, topo_or_None, omega, stage_idx or None, epoch_idx)
    for idx, etime in enumerate(epoch_times):
        outcome = reoptimize(etime)
        if outcome is None:
            continue
        new_topo, routed = outcome
        new_omega = routed.omega
        if current_x is None:
            # Initial install carries no traffic yet: instantaneous.
            epochs.append(EpochInfo(etime, 0.0, 0, routed.mu, routed.beta))
            schedule.append((etime, new_topo.X.astype(float), new_omega,
                             None, idx))
        else:
            old, new = current_x, new_topo
            changing = _changing_circuits(old.x, new.x)
            total_old = int(old.x.sum())
            p = len(changing) / total_old if total_old else 0.0
            stages = num_stages(min(p, 1.0), policy.alpha_pred)
            epochs.append(EpochInfo(etime, p, stages, routed.mu, routed.beta))
            if stages and policy.stage_latency > 0:
                chunks = np.array_split(np.arange(len(changing)), stages)
                for s, chunk in enumerate(chunks):
                    stage_x = old.x.copy()
                    for ci in chunk:
                        i, j, m = changing[ci]
                        stage_x[m, i, j] -= 1
                    stage_cap = stage_x.sum(axis=0).astype(float)
                    schedule.append((etime + s * policy.stage_latency,
                                     stage_cap,
                                     _restrict_weights(current_omega,
                                                       stage_cap),
                                     s, idx))
                schedule.append((etime + stages * policy.stage_latency,
                                 new_topo.X.astype(float), new_omega,
                                 None, idx))
            else:
                schedule.append((etime, new_topo.X.astype(float), new_omega,
                                 None, idx))
        current_x = new_topo
        current_omega = new_omega

    if not schedule:
        return points, epochs

    si = 0
    active = None
    for tm_idx in range(len(seq)):
        now = times[tm_idx]
        while si < len(schedule) and schedule[si][0] <= now:
            active = schedule[si]
            si += 1
        if active is None:
            continue
        _, cap, omega, stage, eidx = active
        rec = evaluate_static(cap, omega, seq[tm_idx], phys.link_bandwidth)
        points.append(SimPoint(now, rec, eidx, stage))
    return points, epochs
