"""Rounding a fractional topology onto the circuit-switch bank.

The Lagrangian dual method relaxes the per-pair matching constraints
floor(d*) <= sum_m x_ij^m <= ceil(d*) with projected dual prices and
visits switches one at a time: each visit re-optimizes that switch's
cells within a one-link move window as a min-cost circulation, then
takes an immediate subgradient step on the prices.  Port budgets are
enforced inside every subproblem, so hard feasibility holds at all
times; the best solution by matching-constraint goodness is kept.

The per-switch utility -(x - h)^2 is concave, so inside the move window
it decomposes exactly into per-unit arcs with decreasing gains
(2h + 1 - 2a for the a-th link).  A midpoint linearization would price
"keep the current link" and "add one more" identically, which lets the
solver flip cells freely once the dual prices balance and keeps the
iteration from ever settling; the exact unit gains leave a stability
band of width 2 around the current state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import lp, optimize
from .circulation import FlowNetwork, solve_circulation
from .errors import (InfeasibleRoutingError, InternalError, InvalidInputError,
                     UndefinedGapError)
from .model import (FractionalTopology, IntegerTopology, PhysicalTopology,
                    check_fractional, validate)
from .traffic import CriticalSet

#: Guard against LP float fuzz when snapping d* to its integer brackets.
_SNAP = 1e-9


@dataclass
class DualState:
    """Projected dual prices and the integer brackets they enforce."""

    p_plus: np.ndarray
    p_minus: np.ndarray
    c_minus: np.ndarray
    c_plus: np.ndarray
    iteration: int = 0

    @property
    def step(self) -> float:
        """Harmonic step size 1/tau (diverging sum, so prices can grow)."""
        return 1.0 / self.iteration

    def update(self, totals: np.ndarray):
        """Projected subgradient step from aggregate link counts."""
        delta = self.step
        self.p_plus = np.maximum(self.p_plus - delta * (self.c_plus - totals),
                                 0.0)
        self.p_minus = np.maximum(self.p_minus - delta * (totals - self.c_minus),
                                  0.0)


@dataclass(frozen=True)
class RoundingReport:
    topo: IntegerTopology
    goodness: int  # pod pairs whose matching constraints hold
    violation_ratio: float
    iterations_run: int


def _brackets(d: np.ndarray):
    c_minus = np.floor(d + _SNAP).astype(int)
    c_plus = np.ceil(d - _SNAP).astype(int)
    return c_minus, c_plus


def _goodness(x_total: np.ndarray, c_minus: np.ndarray,
              c_plus: np.ndarray) -> int:
    n = x_total.shape[0]
    ok = (c_minus <= x_total) & (x_total <= c_plus)
    np.fill_diagonal(ok, True)
    return int(ok.sum()) - n


def _report(x: np.ndarray, c_minus, c_plus, iterations: int) -> RoundingReport:
    n = x.shape[1]
    topo = IntegerTopology(x)
    good = _goodness(topo.X, c_minus, c_plus)
    total_pairs = n * (n - 1)
    return RoundingReport(topo, good, (total_pairs - good) / total_pairs,
                          iterations)


def _check_inputs(phys: PhysicalTopology, d_star: FractionalTopology):
    if d_star.num_pods != phys.num_pods:
        raise InvalidInputError("fractional topology does not match the fabric")
    if check_fractional(phys, d_star):
        raise InvalidInputError("fractional topology violates degree bounds")


def _solve_switch_subproblem(h: np.ndarray, p_net: np.ndarray,
                             x_hat: np.ndarray, ingress: np.ndarray,
                             egress: np.ndarray) -> np.ndarray:
    """Re-optimize one switch's cells within a one-link move window.

    Maximizes sum of -(x - h)^2 + p_net * x per cell subject to the
    switch's port budgets and max(x̂-1, 0) <= x <= x̂+1.  The concave
    utility splits into per-unit arcs with gains 2h + 1 - 2a, so the
    minimum-cost circulation is exact and integral.
    """
    n = h.shape[0]
    net = FlowNetwork(2 * n + 2)
    source, sink = 2 * n, 2 * n + 1
    for i in range(n):
        net.add_arc(source, i, 0, int(egress[i]), 0.0)
    for j in range(n):
        net.add_arc(n + j, sink, 0, int(ingress[j]), 0.0)
    cell_arcs = {}
    unit_gains = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            low = max(int(x_hat[i, j]) - 1, 0)
            high = int(x_hat[i, j]) + 1
            arcs = []
            if low > 0:
                arcs.append(net.add_arc(i, n + j, low, low, 0.0))
            for unit in range(low + 1, high + 1):
                gain = (2.0 * h[i, j] + 1.0 - 2.0 * unit) + p_net[i, j]
                unit_gains.append(gain)
                arcs.append(net.add_arc(i, n + j, 0, 1, -gain))
            cell_arcs[(i, j)] = arcs
    # Feedback reward breaks exact ties toward assigning more links; keep it
    # well under the smallest gain gap.
    eps = 1e-9
    distinct = np.unique(np.round(unit_gains, 12))
    if len(distinct) > 1:
        eps = min(eps, float(np.diff(distinct).min()) / 4)
    net.add_arc(sink, source, 0, int(egress.sum()), -abs(eps))
    result = solve_circulation(net)
    if not result.feasible:
        raise InternalError("per-switch subproblem infeasible")
    x = np.zeros((n, n), dtype=int)
    for (i, j), arcs in cell_arcs.items():
        x[i, j] = sum(int(result.flows[a]) for a in arcs)
    return x


def ldm_round(phys: PhysicalTopology, d_star: FractionalTopology,
              tau_max: int = 200) -> RoundingReport:
    """Dual-ascent rounding with per-switch circulation subproblems."""
    _check_inputs(phys, d_star)
    if tau_max < 1:
        raise InvalidInputError("need at least one iteration")
    n, M = phys.num_pods, phys.num_ocs
    c_minus, c_plus = _brackets(d_star.d)
    np.fill_diagonal(c_minus, 0)
    np.fill_diagonal(c_plus, 0)
    # h_ij^m: the natural per-switch ceiling on x_ij^m; the primal objective
    # -(x - h)^2 rewards forming as many links as ports allow.
    h = np.minimum(phys.egress_ports[:, :, None], phys.ingress_ports[:, None, :])

    x_hat = np.zeros((M, n, n), dtype=int)
    best = x_hat.copy()
    best_good = _goodness(x_hat.sum(axis=0), c_minus, c_plus)
    total_pairs = n * (n - 1)
    dual = DualState(np.zeros((n, n)), np.zeros((n, n)), c_minus, c_plus)

    iterations = 0
    for tau in range(1, tau_max + 1):
        iterations = tau
        dual.iteration = tau
        for m in range(M):
            x_hat[m] = _solve_switch_subproblem(
                h[m], dual.p_minus - dual.p_plus, x_hat[m],
                phys.ingress_ports[m], phys.egress_ports[m])
            if (x_hat[m].sum(axis=1) > phys.egress_ports[m]).any() \
                    or (x_hat[m].sum(axis=0) > phys.ingress_ports[m]).any():
                raise InternalError("port budget violated after subproblem")
            totals = x_hat.sum(axis=0)
            good = _goodness(totals, c_minus, c_plus)
            if good > best_good:
                best_good = good
                best = x_hat.copy()
            dual.update(totals)
        if best_good == total_pairs:
            break  # every matching constraint already satisfied
    return _report(best, c_minus, c_plus, iterations)


def greedy_round(phys: PhysicalTopology, d_star: FractionalTopology,
                 tau_max: int = 0) -> RoundingReport:
    """Largest-residual-first matching baseline.

    Each switch in index order repeatedly grants one link to the pod pair
    with the largest remaining fractional demand that its ports can still
    serve; ties break lexicographically.
    """
    _check_inputs(phys, d_star)
    n, M = phys.num_pods, phys.num_ocs
    c_minus, c_plus = _brackets(d_star.d)
    x = np.zeros((M, n, n), dtype=int)
    assigned = np.zeros((n, n))
    for m in range(M):
        eg_left = phys.egress_ports[m].copy()
        ig_left = phys.ingress_ports[m].copy()
        while True:
            best_pair = None
            best_residual = 0.0
            for i in range(n):
                if eg_left[i] <= 0:
                    continue
                for j in range(n):
                    if i == j or ig_left[j] <= 0:
                        continue
                    residual = d_star.d[i, j] - assigned[i, j]
                    if residual > best_residual + 1e-12:
                        best_residual = residual
                        best_pair = (i, j)
            if best_pair is None:
                break
            i, j = best_pair
            x[m, i, j] += 1
            assigned[i, j] += 1
            eg_left[i] -= 1
            ig_left[j] -= 1
    return _report(x, c_minus, c_plus, 0)


def optimality_gap(phys: PhysicalTopology, report: RoundingReport,
                   d_star: FractionalTopology, crit: CriticalSet) -> float:
    """Throughput lost by rounding: 1 - mu_int / mu_frac.

    mu_frac is the stage-1 throughput over the fractional link counts and
    mu_int the recomputed throughput over the rounded topology.  A rounded
    topology can only be better through matching-constraint violations, so
    negative gaps are clamped to zero with a warning.
    """
    try:
        mu_frac = _fixed_throughput(phys, d_star.d, crit)
    except InfeasibleRoutingError:
        raise UndefinedGapError("fractional throughput is zero")
    if mu_frac <= 0:
        raise UndefinedGapError("fractional throughput is zero")
    try:
        mu_int = optimize.recompute_routing(phys, report.topo, crit,
                                            desensitized=False).mu
    except InfeasibleRoutingError:
        mu_int = 0.0
    gap = 1.0 - mu_int / mu_frac
    if gap < 0:
        warnings.warn("integer topology beat the fractional one; gap clamped"
                      " to 0 (matching-constraint violations let it borrow"
                      " capacity)")
        gap = 0.0
    return min(gap, 1.0)


def _fixed_throughput(phys: PhysicalTopology, capacity: np.ndarray,
                      crit: CriticalSet) -> float:
    """Stage-1 throughput with link counts frozen at ``capacity``."""
    builder = optimize._StageBuilder(phys, crit, fixed=capacity)
    model = builder.new_model("fixed-throughput", None)
    model.add_var("mu", 0.0, None)
    builder.add_split_constraints(model, "mu")
    builder.add_load_constraints(model, 1.0)
    model.set_objective("max", {"mu": 1.0})
    sol = lp.solve(model)
    if not sol.optimal:
        raise InternalError(f"fixed-capacity throughput LP ended {sol.status}")
    return sol.values["mu"]
