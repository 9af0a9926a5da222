"""Integral min-cost circulation and the bounded-assignment reduction.

The solver takes arcs with integer lower/upper bounds and real (possibly
negative) costs.  Lower bounds and negative-cost arcs are removed by the
standard transformations (base flow + arc saturation), leaving a deficit
routing problem with nonnegative reduced costs that successive shortest
paths with potentials solves exactly.  All returned flows are integral
because every augmentation moves an integer amount.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    lower: int
    upper: int
    cost: float


@dataclass
class FlowNetwork:
    """Directed network with per-arc [lower, upper] bounds and unit costs."""

    num_nodes: int
    arcs: list = field(default_factory=list)

    def add_arc(self, tail: int, head: int, lower: int, upper: int,
                cost: float) -> int:
        if not (0 <= tail < self.num_nodes and 0 <= head < self.num_nodes):
            raise InvalidInputError("arc endpoint out of range")
        if lower != int(lower) or upper != int(upper):
            raise InvalidInputError("arc bounds must be integers")
        lower, upper = int(lower), int(upper)
        if lower < 0 or upper < 0 or lower > upper:
            raise InvalidInputError("arc bounds must satisfy 0 <= lower <= upper")
        self.arcs.append(Arc(tail, head, lower, upper, float(cost)))
        return len(self.arcs) - 1


@dataclass
class CirculationResult:
    feasible: bool
    flows: Optional[np.ndarray]  # per-arc integer flow, None when infeasible
    cost: Optional[float]


def solve_circulation(net: FlowNetwork) -> CirculationResult:
    """Minimum-cost circulation; reports infeasibility of the lower bounds."""
    n = net.num_nodes
    m = len(net.arcs)
    # Residual arc storage: pairs (2a, 2a+1) are forward/backward of arc a.
    head = np.empty(2 * m, dtype=int)
    cap = np.zeros(2 * m, dtype=np.int64)
    cost = np.zeros(2 * m, dtype=float)
    excess = np.zeros(n, dtype=np.int64)

    for a, arc in enumerate(net.arcs):
        residual = arc.upper - arc.lower
        head[2 * a], head[2 * a + 1] = arc.head, arc.tail
        cost[2 * a], cost[2 * a + 1] = arc.cost, -arc.cost
        # Base flow at the lower bound.
        excess[arc.head] += arc.lower
        excess[arc.tail] -= arc.lower
        if arc.cost < 0:
            # Saturate negative arcs so every residual cost is nonnegative.
            cap[2 * a + 1] = residual
            excess[arc.head] += residual
            excess[arc.tail] -= residual
        else:
            cap[2 * a] = residual

    adj = [[] for _ in range(n)]
    for e in range(2 * m):
        adj[net.arcs[e // 2].tail if e % 2 == 0 else net.arcs[e // 2].head].append(e)

    potential = np.zeros(n, dtype=float)
    INF = float("inf")

    while True:
        sources = np.nonzero(excess > 0)[0]
        if len(sources) == 0:
            break
        src = int(sources[0])
        # Dijkstra over reduced costs from src.
        dist = np.full(n, INF)
        dist[src] = 0.0
        prev_edge = np.full(n, -1, dtype=int)
        done = np.zeros(n, dtype=bool)
        heap = [(0.0, src)]
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            for e in adj[v]:
                if cap[e] <= 0:
                    continue
                w = head[e]
                nd = d + cost[e] + potential[v] - potential[w]
                if nd < dist[w] - 1e-12:
                    dist[w] = nd
                    prev_edge[w] = e
                    heapq.heappush(heap, (nd, w))
        targets = [v for v in range(n) if excess[v] < 0 and dist[v] < INF]
        if not targets:
            return CirculationResult(False, None, None)
        dst = min(targets, key=lambda v: dist[v])
        # Every node's potential advances by min(dist, dist[dst]) -- including
        # unreached ones at dist[dst] -- to keep all reduced costs nonnegative.
        potential += np.minimum(dist, dist[dst])

        # Augment along the shortest path.
        bottleneck = min(excess[src], -excess[dst])
        v = dst
        while v != src:
            e = prev_edge[v]
            bottleneck = min(bottleneck, cap[e])
            v = net.arcs[e // 2].tail if e % 2 == 0 else net.arcs[e // 2].head
        v = dst
        while v != src:
            e = prev_edge[v]
            cap[e] -= bottleneck
            cap[e ^ 1] += bottleneck
            v = net.arcs[e // 2].tail if e % 2 == 0 else net.arcs[e // 2].head
        excess[src] -= bottleneck
        excess[dst] += bottleneck

    flows = np.empty(m, dtype=np.int64)
    total = 0.0
    for a, arc in enumerate(net.arcs):
        # Backward residual always equals the flow above the lower bound.
        f = arc.lower + cap[2 * a + 1]
        flows[a] = f
        total += arc.cost * f
    return CirculationResult(True, flows, total)


@dataclass(frozen=True)
class SubproblemSpec:
    """Bounded bipartite assignment: min sum C_ij a_ij with row/column caps.

    ``Q[i]`` caps row sums, ``P[j]`` caps column sums, and each cell is
    confined to [L_ij, U_ij].
    """

    C: np.ndarray  # (I, J) costs
    P: np.ndarray  # (J,) column caps
    Q: np.ndarray  # (I,) row caps
    L: np.ndarray  # (I, J) lower bounds
    U: np.ndarray  # (I, J) upper bounds

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        P = np.asarray(self.P, dtype=int)
        Q = np.asarray(self.Q, dtype=int)
        L = np.asarray(self.L, dtype=int)
        U = np.asarray(self.U, dtype=int)
        if C.ndim != 2:
            raise InvalidInputError("C must be a matrix")
        I, J = C.shape
        if P.shape != (J,) or Q.shape != (I,) or L.shape != C.shape \
                or U.shape != C.shape:
            raise InvalidInputError("spec shapes are inconsistent")
        if (P < 0).any() or (Q < 0).any():
            raise InvalidInputError("caps must be nonnegative")
        if (L > U).any() or (L < 0).any():
            raise InvalidInputError("cell bounds must satisfy 0 <= L <= U")
        for name, v in (("C", C), ("P", P), ("Q", Q), ("L", L), ("U", U)):
            object.__setattr__(self, name, v)

    @property
    def shape(self):
        return self.C.shape


def _tiebreak_epsilon(costs: np.ndarray, epsilon: float) -> float:
    """Shrink epsilon below half the smallest nonzero cell-cost gap."""
    distinct = np.unique(costs)
    if len(distinct) > 1:
        gap = np.diff(distinct).min()
        if epsilon >= gap / 2:
            return gap / 4
    return epsilon


def build_subproblem(spec: SubproblemSpec, epsilon: float = 1e-6) -> FlowNetwork:
    """Map a bounded assignment problem to a circulation instance.

    Left nodes are rows, right nodes columns.  A feedback arc from sink to
    source carries a small negative cost so the solver assigns extra flow
    whenever it is free to do so.  Cell-arc flows of the solved network are
    the assignment minimizing sum C_ij a_ij.
    """
    I, J = spec.shape
    eps = _tiebreak_epsilon(spec.C, epsilon)
    net = FlowNetwork(I + J + 2)
    source, sink = I + J, I + J + 1
    for i in range(I):
        net.add_arc(source, i, 0, int(spec.Q[i]), 0.0)
    for j in range(J):
        net.add_arc(I + j, sink, 0, int(spec.P[j]), 0.0)
    for i in range(I):
        for j in range(J):
            net.add_arc(i, I + j, int(spec.L[i, j]), int(spec.U[i, j]),
                        float(spec.C[i, j]))
    net.add_arc(sink, source, 0, int(spec.Q.sum()), -eps)
    return net


def solve_subproblem(spec: SubproblemSpec, epsilon: float = 1e-6):
    """Solve the bounded assignment; returns (a, objective) or None if infeasible."""
    I, J = spec.shape
    net = build_subproblem(spec, epsilon)
    result = solve_circulation(net)
    if not result.feasible:
        return None
    cells = result.flows[I + J:I + J + I * J].reshape(I, J)
    return cells.astype(int), float((spec.C * cells).sum())
