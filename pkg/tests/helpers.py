"""Shared instance generators and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from couder.circulation import FlowNetwork
from couder.model import (FractionalTopology, PhysicalTopology, TrafficMatrix)
from couder.traffic import CriticalSet


def make_fabric(n: int, m: int, ports_per_switch, bandwidth: float = 1.0
                ) -> PhysicalTopology:
    """Symmetric fabric: every pod exposes the same port count to each switch."""
    q = np.broadcast_to(np.asarray(ports_per_switch, dtype=int), (n,))
    h = np.tile(q, (m, 1))
    return PhysicalTopology(n, m, h, h.copy(), bandwidth)


def random_fabric(rng: np.random.Generator, n: int, m: int,
                  qmin: int = 2, qmax: int = 8,
                  bandwidth: float = 1.0) -> PhysicalTopology:
    q = rng.integers(qmin, qmax + 1, size=n)
    return make_fabric(n, m, q, bandwidth)


def random_tm(rng: np.random.Generator, n: int, scale: float = 10.0
              ) -> TrafficMatrix:
    t = rng.uniform(0.0, scale, size=(n, n))
    np.fill_diagonal(t, 0.0)
    return TrafficMatrix(t)


def random_criticals(rng: np.random.Generator, n: int, k: int,
                     scale: float = 10.0) -> CriticalSet:
    return CriticalSet(tuple(random_tm(rng, n, scale) for _ in range(k)))


def hetero_fabric(rng: np.random.Generator, n: int, m: int,
                  qmin: int = 2, qmax: int = 8,
                  bandwidth: float = 1.0) -> PhysicalTopology:
    """Heterogeneous striping: random per-switch egress counts, ingress a
    random composition of each switch's total (at least one per pod)."""
    h_eg = rng.integers(qmin, qmax + 1, size=(m, n))
    h_ig = np.zeros_like(h_eg)
    for sw in range(m):
        total = int(h_eg[sw].sum())
        h_ig[sw] = rng.multinomial(total - n, np.full(n, 1.0 / n)) + 1
    return PhysicalTopology(n, m, h_eg, h_ig, bandwidth)


def random_fractional(rng: np.random.Generator, phys: PhysicalTopology,
                      fill: float = 0.95) -> FractionalTopology:
    """Random d scaled toward the fabric's degree bounds.

    Throughput-optimal fractional topologies use nearly all of every pod's
    degree budget, so realistic rounding inputs are degree-saturated.
    """
    n = phys.num_pods
    d = rng.uniform(0.2, 3.0, size=(n, n))
    np.fill_diagonal(d, 0.0)
    r_eg = phys.egress_radix.astype(float)
    r_ig = phys.ingress_radix.astype(float)
    for _ in range(60):
        rows = d.sum(axis=1)
        d *= np.where(rows > 0, fill * r_eg / np.maximum(rows, 1e-12),
                      1.0)[:, None]
        cols = d.sum(axis=0)
        over = cols > fill * r_ig
        d[:, over] *= (fill * r_ig[over] / cols[over])[None, :]
    np.fill_diagonal(d, 0.0)
    return FractionalTopology(np.clip(d, 0.0, None))


def random_mesh_topology(rng: np.random.Generator, n: int, uplinks: int
                         ) -> np.ndarray:
    """Sum of ``uplinks`` random self-loop-free matchings: X with all row
    and column sums equal to ``uplinks``."""
    X = np.zeros((n, n), dtype=int)
    for _ in range(uplinks):
        perm = rng.permutation(n)
        # Repair fixed points by rotating them amongst themselves.
        fixed = np.nonzero(perm == np.arange(n))[0]
        if len(fixed) == 1:
            other = (fixed[0] + 1) % n
            perm[fixed[0]], perm[other] = perm[other], perm[fixed[0]]
        elif len(fixed) > 1:
            perm[fixed] = np.roll(perm[fixed], 1)
        X[np.arange(n), perm] += 1
    return X


def brute_force_circulation(net: FlowNetwork):
    """Exhaustive minimum-cost circulation; None when infeasible."""
    ranges = [range(a.lower, a.upper + 1) for a in net.arcs]
    best_cost, best_flow = None, None
    for flows in itertools.product(*ranges):
        balance = np.zeros(net.num_nodes)
        for f, a in zip(flows, net.arcs):
            balance[a.tail] -= f
            balance[a.head] += f
        if np.abs(balance).max(initial=0.0) > 1e-9:
            continue
        cost = sum(f * a.cost for f, a in zip(flows, net.arcs))
        if best_cost is None or cost < best_cost - 1e-12:
            best_cost, best_flow = cost, flows
    if best_cost is None:
        return None
    return best_cost, best_flow


def convex_combination(rng: np.random.Generator, crit: CriticalSet
                       ) -> TrafficMatrix:
    """Random demand inside the critical set: lambda >= 0, sum lambda <= 1."""
    k = len(crit)
    lam = rng.dirichlet(np.ones(k)) * rng.uniform(0.0, 1.0)
    t = np.tensordot(lam, crit.stacked(), axes=1)
    np.fill_diagonal(t, 0.0)
    return TrafficMatrix(t)
