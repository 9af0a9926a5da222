"""Fractional topology + routing optimization pipeline.

Three LP stages over a set of critical traffic matrices:

1. maximize the worst-case throughput scale factor mu shared by all
   critical matrices (a single routing weight set serves every matrix);
2. desensitize: binary-search the smallest per-link sensitivity bound
   beta that still supports mu;
3. minimize average hop count by maximizing worst-case direct-path
   traffic subject to mu and beta.

Stage 1 is nonlinear as written (mu * omega products) and is solved in
scaled weights wp = omega * mu, which linearizes every constraint.
The same stages rerun with link counts frozen to an integer topology to
recompute routing after rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import lp
from .errors import (InfeasibleRoutingError, InternalError, InvalidInputError,
                     UnboundedThroughputError)
from .model import (FractionalTopology, IntegerTopology, Path,
                    PhysicalTopology, RoutingWeights, enumerate_paths,
                    validate)
from .traffic import CriticalSet

SensitivityMode = Literal["per-link", "literal"]

#: Relative bracket width at which the beta binary search stops.
BETA_TOL = 1e-3
BETA_CAP = 1e6


@dataclass(frozen=True)
class FractionalSolution:
    d: FractionalTopology
    omega: RoutingWeights
    mu: float
    beta: Optional[float] = None


def _wname(p: Path) -> str:
    if p.via is None:
        return f"w_{p.src}.{p.dst}"
    return f"w_{p.src}.{p.via}.{p.dst}"


def _dname(i: int, j: int) -> str:
    return f"d_{i}.{j}"


def _pairs(n: int):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def _crossing_paths(n: int) -> dict:
    """Paths traversing each link (a, b): direct, first-hop, and second-hop."""
    out = {}
    for a, b in _pairs(n):
        paths = [Path(a, b)]
        paths.extend(Path(a, j, b) for j in range(n) if j not in (a, b))
        paths.extend(Path(i, b, a) for i in range(n) if i not in (a, b))
        out[(a, b)] = paths
    return out


def _usable(p: Path, cap: Optional[np.ndarray]) -> bool:
    if cap is None:
        return True
    return all(cap[a, b] > 0 for a, b in p.links())


class _StageBuilder:
    """Shared constraint blocks for the three LP stages.

    When ``fixed`` is given, link counts are constants (routing-only mode)
    and paths crossing a zero-capacity link are dropped; pairs left with no
    usable path are deferred to a direct-only fallback unless demanded.
    """

    def __init__(self, phys: PhysicalTopology, crit: CriticalSet,
                 fixed: Optional[np.ndarray] = None):
        if crit.num_pods != phys.num_pods:
            raise InvalidInputError("critical set does not match the fabric")
        self.phys = phys
        self.crit = crit
        self.fixed = None if fixed is None else np.asarray(fixed, dtype=float)
        self.n = phys.num_pods
        self.b = phys.link_bandwidth
        self.paths = enumerate_paths(self.n)
        self.crossing = _crossing_paths(self.n)
        self.demand = crit.stacked()
        self.demanded = self.demand.max(axis=0) > 0
        self.pair_paths = {}
        self.fallback_pairs = []
        for (i, j) in _pairs(self.n):
            usable = [p for p in self.paths[(i, j)] if _usable(p, self.fixed)]
            if usable:
                self.pair_paths[(i, j)] = usable
            elif self.demanded[i, j]:
                raise InfeasibleRoutingError(
                    f"no usable path for demanded pair ({i}, {j})", mu=0.0)
            else:
                self.fallback_pairs.append((i, j))

    def new_model(self, name: str, weight_ub: Optional[float]) -> lp.LpModel:
        model = lp.LpModel(name)
        for paths in self.pair_paths.values():
            for p in paths:
                model.add_var(_wname(p), 0.0, weight_ub)
        if self.fixed is None:
            r_eg = self.phys.egress_radix
            r_ig = self.phys.ingress_radix
            for i, j in _pairs(self.n):
                model.add_var(_dname(i, j), 0.0, float(min(r_eg[i], r_ig[j])))
            for i in range(self.n):
                model.add_constraint(
                    {_dname(i, j): 1.0 for j in range(self.n) if j != i},
                    lp.LE, float(r_eg[i]))
                model.add_constraint(
                    {_dname(j, i): 1.0 for j in range(self.n) if j != i},
                    lp.LE, float(r_ig[i]))
        return model

    def add_load_constraints(self, model: lp.LpModel, scale: float):
        """Per-link, per-critical capacity rows: load <= capacity."""
        for a, b in _pairs(self.n):
            for k in range(len(self.crit)):
                terms = {}
                for p in self.crossing[(a, b)]:
                    if (p.src, p.dst) not in self.pair_paths:
                        continue
                    if p not in self.pair_paths[(p.src, p.dst)]:
                        continue
                    t = self.demand[k, p.src, p.dst]
                    if t > 0:
                        terms[_wname(p)] = scale * t
                if not terms:
                    continue
                if self.fixed is None:
                    terms[_dname(a, b)] = -self.b
                    model.add_constraint(terms, lp.LE, 0.0)
                else:
                    model.add_constraint(terms, lp.LE,
                                         self.b * self.fixed[a, b])

    def add_sensitivity_constraints(self, model: lp.LpModel, beta: float,
                                    mode: SensitivityMode,
                                    weight_scale: float = 1.0):
        """Cap path weights at beta times link capacity.

        per-link: every link along the path constrains its weight;
        literal: only the pair's direct link count does.
        ``weight_scale`` adapts the cap to scaled weight variables.
        """
        if mode == "per-link":
            for a, b in _pairs(self.n):
                cap_pairs = [(p, (a, b)) for p in self.crossing[(a, b)]]
                self._add_caps(model, cap_pairs, beta, weight_scale)
        elif mode == "literal":
            for i, j in _pairs(self.n):
                cap_pairs = [(p, (i, j)) for p in self.paths[(i, j)]]
                self._add_caps(model, cap_pairs, beta, weight_scale)
        else:
            raise InvalidInputError(f"unknown sensitivity mode {mode!r}")

    def _add_caps(self, model, cap_pairs, beta, weight_scale):
        for p, (a, b) in cap_pairs:
            pair = (p.src, p.dst)
            if pair not in self.pair_paths or p not in self.pair_paths[pair]:
                continue
            if self.fixed is None:
                model.add_constraint(
                    {_wname(p): 1.0,
                     _dname(a, b): -beta * self.b * weight_scale},
                    lp.LE, 0.0)
            else:
                model.add_constraint(
                    {_wname(p): 1.0}, lp.LE,
                    beta * self.b * weight_scale * self.fixed[a, b])

    def add_split_constraints(self, model: lp.LpModel, total):
        """Per-pair weight sums: either a constant or a variable name."""
        for pair, paths in self.pair_paths.items():
            expr = {_wname(p): 1.0 for p in paths}
            if isinstance(total, str):
                expr[total] = -1.0
                model.add_constraint(expr, lp.EQ, 0.0)
            else:
                model.add_constraint(expr, lp.EQ, float(total))

    def extract(self, sol: lp.LpSolution, normalize: Optional[float] = None):
        """Pull (d, omega) out of a solved model.

        ``normalize`` divides weights (recovering omega from scaled wp) and
        per-pair sums are renormalized to exactly one; pairs deferred at
        construction fall back to their direct path.
        """
        weights = {}
        for pair, paths in self.pair_paths.items():
            vals = np.array([sol.values[_wname(p)] for p in paths])
            if normalize is not None:
                vals = vals / normalize
            total = vals.sum()
            if total <= 1e-12:
                weights[Path(*pair)] = 1.0
                continue
            vals = vals / total
            for p, w in zip(paths, vals):
                if w > 0:
                    weights[p] = float(w)
        for pair in self.fallback_pairs:
            weights[Path(*pair)] = 1.0
        if self.fixed is None:
            d = np.zeros((self.n, self.n))
            for i, j in _pairs(self.n):
                d[i, j] = max(sol.values[_dname(i, j)], 0.0)
        else:
            d = self.fixed.copy()
        return d, weights

    def lift_d(self, d: np.ndarray, weights: dict, mu: float) -> np.ndarray:
        """Raise d to cover the realized critical loads exactly.

        Clears sub-tolerance LP residue so the throughput guarantee holds
        with a true inequality on every link; the lift is bounded by the
        solver feasibility tolerance.
        """
        if self.fixed is not None or mu <= 0:
            return d
        load = np.zeros((self.n, self.n))
        for k in range(len(self.crit)):
            lk = np.zeros((self.n, self.n))
            for p, w in weights.items():
                t = self.demand[k, p.src, p.dst]
                if t <= 0 or w <= 0:
                    continue
                for a, b in p.links():
                    lk[a, b] += w * mu * t
            load = np.maximum(load, lk)
        return np.maximum(d, load / self.b)


def solve_maxmin_throughput(phys: PhysicalTopology,
                            crit: CriticalSet) -> FractionalSolution:
    """Stage 1: jointly choose link counts and one weight set maximizing mu."""
    builder = _StageBuilder(phys, crit)
    if not builder.demanded.any():
        raise UnboundedThroughputError("all critical matrices are zero")
    model = builder.new_model("maxmin-throughput", None)
    model.add_var("mu", 0.0, None)
    builder.add_split_constraints(model, "mu")
    builder.add_load_constraints(model, 1.0)
    model.set_objective("max", {"mu": 1.0})
    sol = lp.solve(model)
    if sol.status == "unbounded":
        raise UnboundedThroughputError("throughput is unbounded")
    if not sol.optimal:
        raise InternalError(f"stage-1 LP ended {sol.status}")
    mu = sol.values["mu"]
    if mu <= 1e-12:
        raise InfeasibleRoutingError("critical demand cannot be routed", mu=0.0)
    d, weights = builder.extract(sol, normalize=mu)
    d = builder.lift_d(d, weights, mu)
    return FractionalSolution(FractionalTopology(d),
                              RoutingWeights(weights, mu=mu), mu)


def _feasible_at_beta(builder: _StageBuilder, mu_star: float, beta: float,
                      mode: SensitivityMode):
    model = builder.new_model("desensitize", 1.0)
    builder.add_split_constraints(model, 1.0)
    builder.add_load_constraints(model, mu_star)
    builder.add_sensitivity_constraints(model, beta, mode)
    sol = lp.solve_feasibility(model)
    return sol if sol.optimal else None


def desensitize(phys: PhysicalTopology, crit: CriticalSet, mu_star: float,
                mode: SensitivityMode = "per-link",
                beta_tol: float = BETA_TOL,
                _fixed: Optional[np.ndarray] = None) -> FractionalSolution:
    """Stage 2: smallest sensitivity bound beta preserving throughput mu*.

    Feasibility LPs at candidate beta values are bisected until the bracket's
    relative width drops below ``beta_tol``; the solution kept is the one at
    the final feasible upper bracket.
    """
    if mu_star <= 0:
        raise InvalidInputError("mu_star must be positive")
    builder = _StageBuilder(phys, crit, fixed=_fixed)
    lo, hi = 0.0, 1.0
    best = _feasible_at_beta(builder, mu_star, hi, mode)
    while best is None:
        lo, hi = hi, hi * 2
        if hi > BETA_CAP:
            raise InternalError("no feasible sensitivity bound below cap")
        best = _feasible_at_beta(builder, mu_star, hi, mode)
    while hi - lo > beta_tol * hi:
        mid = (lo + hi) / 2
        sol = _feasible_at_beta(builder, mu_star, mid, mode)
        if sol is None:
            lo = mid
        else:
            hi, best = mid, sol
    d, weights = builder.extract(best)
    d = builder.lift_d(d, weights, mu_star)
    return FractionalSolution(FractionalTopology(d),
                              RoutingWeights(weights, mu=mu_star, beta=hi),
                              mu_star, hi)


def minimize_ahc(phys: PhysicalTopology, crit: CriticalSet, mu_star: float,
                 beta: Optional[float],
                 mode: SensitivityMode = "per-link",
                 _fixed: Optional[np.ndarray] = None) -> FractionalSolution:
    """Stage 3: maximize worst-case direct-path traffic at fixed mu* and beta.

    ``beta=None`` skips the sensitivity caps (the non-desensitized variant).
    """
    if mu_star <= 0:
        raise InvalidInputError("mu_star must be positive")
    builder = _StageBuilder(phys, crit, fixed=_fixed)
    model = builder.new_model("minimize-ahc", 1.0)
    model.add_var("z", 0.0, None)
    builder.add_split_constraints(model, 1.0)
    builder.add_load_constraints(model, mu_star)
    if beta is not None:
        builder.add_sensitivity_constraints(model, beta, mode)
    for k in range(len(crit)):
        terms = {"z": -1.0}
        for (i, j), paths in builder.pair_paths.items():
            t = builder.demand[k, i, j]
            if t > 0 and paths[0].via is None:
                terms[_wname(paths[0])] = t
        model.add_constraint(terms, lp.GE, 0.0)
    model.set_objective("max", {"z": 1.0})
    sol = lp.solve(model)
    if not sol.optimal:
        raise InternalError(f"stage-3 LP ended {sol.status}")
    d, weights = builder.extract(sol)
    d = builder.lift_d(d, weights, mu_star)
    return FractionalSolution(FractionalTopology(d),
                              RoutingWeights(weights, mu=mu_star, beta=beta),
                              mu_star, beta)


def run_pipeline(phys: PhysicalTopology, crit: CriticalSet,
                 desensitized: bool = True,
                 mode: SensitivityMode = "per-link",
                 beta_tol: float = BETA_TOL) -> FractionalSolution:
    """Full stage 1 -> 2 -> 3 run; stage 2 is skipped when not desensitized."""
    step1 = solve_maxmin_throughput(phys, crit)
    beta = None
    if desensitized:
        beta = desensitize(phys, crit, step1.mu, mode, beta_tol).beta
    return minimize_ahc(phys, crit, step1.mu, beta, mode)


def recompute_routing(phys: PhysicalTopology, topo: IntegerTopology,
                      crit: CriticalSet,
                      desensitized: bool = True,
                      mode: SensitivityMode = "per-link",
                      beta_tol: float = BETA_TOL) -> FractionalSolution:
    """Rerun the three stages with link counts frozen to the integer topology."""
    if validate(phys, topo):
        raise InvalidInputError("integer topology violates port budgets")
    fixed = topo.X.astype(float)
    builder = _StageBuilder(phys, crit, fixed=fixed)  # raises if disconnected
    if not builder.demanded.any():
        raise UnboundedThroughputError("all critical matrices are zero")
    model = builder.new_model("recompute-throughput", None)
    model.add_var("mu", 0.0, None)
    builder.add_split_constraints(model, "mu")
    builder.add_load_constraints(model, 1.0)
    model.set_objective("max", {"mu": 1.0})
    sol = lp.solve(model)
    if sol.status == "unbounded":
        raise UnboundedThroughputError("throughput is unbounded")
    if not sol.optimal:
        raise InternalError(f"recompute stage-1 LP ended {sol.status}")
    mu = sol.values["mu"]
    if mu <= 1e-12:
        raise InfeasibleRoutingError("demand cannot be routed over topology",
                                     mu=0.0)
    beta = None
    if desensitized:
        beta = desensitize(phys, crit, mu, mode, beta_tol, _fixed=fixed).beta
    return minimize_ahc(phys, crit, mu, beta, mode, _fixed=fixed)


def solve_maxmin_per_tm(phys: PhysicalTopology, crit: CriticalSet):
    """Max-min throughput with an independent weight set per critical matrix.

    Comparison oracle only: its mu upper-bounds the shared-weight stage 1,
    but the weights give no guarantee for unseen convex combinations.
    """
    builder = _StageBuilder(phys, crit)
    if not builder.demanded.any():
        raise UnboundedThroughputError("all critical matrices are zero")
    n, K = builder.n, len(crit)
    model = builder.new_model("maxmin-per-tm", None)
    model.add_var("mu", 0.0, None)

    def kname(k: int, p: Path) -> str:
        return f"k{k}_{_wname(p)}"

    for k in range(K):
        for paths in builder.pair_paths.values():
            for p in paths:
                model.add_var(kname(k, p), 0.0, None)
            model.add_constraint(
                dict({kname(k, p): 1.0 for p in paths}, mu=-1.0), lp.EQ, 0.0)
    for a, b in _pairs(n):
        for k in range(K):
            terms = {}
            for p in builder.crossing[(a, b)]:
                pair = (p.src, p.dst)
                if pair in builder.pair_paths and p in builder.pair_paths[pair]:
                    t = builder.demand[k, p.src, p.dst]
                    if t > 0:
                        terms[kname(k, p)] = t
            if terms:
                terms[_dname(a, b)] = -builder.b
                model.add_constraint(terms, lp.LE, 0.0)
    model.set_objective("max", {"mu": 1.0})
    sol = lp.solve(model)
    if sol.status == "unbounded":
        raise UnboundedThroughputError("throughput is unbounded")
    if not sol.optimal:
        raise InternalError(f"per-tm LP ended {sol.status}")
    mu = sol.values["mu"]
    if mu <= 1e-12:
        raise InfeasibleRoutingError("critical demand cannot be routed", mu=0.0)
    d = np.zeros((n, n))
    for i, j in _pairs(n):
        d[i, j] = max(sol.values[_dname(i, j)], 0.0)
    omegas = []
    for k in range(K):
        weights = {}
        for pair, paths in builder.pair_paths.items():
            vals = np.array([sol.values[kname(k, p)] for p in paths]) / mu
            total = vals.sum()
            if total <= 1e-12:
                weights[Path(*pair)] = 1.0
                continue
            for p, w in zip(paths, vals / total):
                if w > 0:
                    weights[p] = float(w)
        omegas.append(RoutingWeights(weights, mu=mu))
    return FractionalTopology(d), omegas, mu


def compute_path_capacity(topo: IntegerTopology, max_hops: int,
                          bandwidth: float = 1.0) -> float:
    """Mean pod-pair capacity over paths of at most ``max_hops`` hops.

    Per ordered pair this is a hop-layered maximum flow: layer-indexed link
    flows share each physical link's capacity, may not revisit the source
    or leave the destination, and must reach the destination within the hop
    budget.  One hop reduces to the direct link count.
    """
    if max_hops not in (1, 2, 3, 4):
        raise InvalidInputError("max_hops must be between 1 and 4")
    X = topo.X.astype(float) * bandwidth
    n = topo.num_pods
    if max_hops == 1:
        total = X.sum()  # diagonal is zero by construction
        return float(total / (n * (n - 1)))
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += _pair_capacity(X, i, j, max_hops)
    return float(total / (n * (n - 1)))


def _pair_capacity(X: np.ndarray, src: int, dst: int, H: int) -> float:
    n = X.shape[0]
    model = lp.LpModel(f"capacity_{src}_{dst}")

    def fname(l, u, v):
        return f"f{l}_{u}.{v}"

    exists = set()
    for l in range(1, H + 1):
        for u in range(n):
            for v in range(n):
                if u == v or X[u, v] <= 0 or v == src or u == dst:
                    continue
                if (l == 1) != (u == src):
                    continue
                if l == H and v != dst:
                    continue
                model.add_var(fname(l, u, v), 0.0, float(X[u, v]))
                exists.add((l, u, v))
    if not exists:
        return 0.0
    # Shared physical link capacity across layers.
    for u in range(n):
        for v in range(n):
            names = [fname(l, u, v) for l in range(1, H + 1)
                     if (l, u, v) in exists]
            if len(names) > 1:
                model.add_constraint({nm: 1.0 for nm in names}, lp.LE,
                                     float(X[u, v]))
    # Flow through an intermediate pod continues to the next layer.
    for l in range(1, H):
        for v in range(n):
            if v in (src, dst):
                continue
            expr = {}
            for u in range(n):
                if (l, u, v) in exists:
                    expr[fname(l, u, v)] = 1.0
            for w in range(n):
                if (l + 1, v, w) in exists:
                    expr[fname(l + 1, v, w)] = -1.0
            if expr:
                model.add_constraint(expr, lp.EQ, 0.0)
    obj = {fname(l, u, v): 1.0 for (l, u, v) in exists if v == dst}
    model.set_objective("max", obj)
    sol = lp.solve(model)
    if not sol.optimal:
        raise InternalError(f"capacity LP ended {sol.status}")
    return sol.objective_value
