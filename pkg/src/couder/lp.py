"""Minimal linear-programming core used by the optimization modules.

The model builder keeps named variables with bounds, linear constraints,
and a linear objective.  Solving is delegated to HiGHS via scipy, which
provides the required determinism, anti-cycling, and 1e-6 tolerances;
the rest of the toolkit depends only on this interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InvalidInputError, SolverLimitError

FEAS_TOL = 1e-6

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = (LE, EQ, GE)


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    values: dict
    objective_value: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name: str) -> float:
        return self.values[name]


class LpModel:
    """Incrementally built LP: named bounded variables, linear rows, objective."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self._index = {}
        self._lb = []
        self._ub = []
        self._rows = []  # (terms, relation, rhs); terms = [(var_idx, coef)]
        self._sense = "min"
        self._objective = []  # [(var_idx, coef)]

    @property
    def num_variables(self) -> int:
        return len(self._index)

    @property
    def num_constraints(self) -> int:
        return len(self._rows)

    def add_var(self, name: str, lb: float = 0.0,
                ub: Optional[float] = None) -> str:
        if name in self._index:
            raise InvalidInputError(f"variable {name!r} already declared")
        if ub is not None and lb is not None and lb > ub:
            raise InvalidInputError(f"variable {name!r} has lb > ub")
        self._index[name] = len(self._lb)
        self._lb.append(-np.inf if lb is None else float(lb))
        self._ub.append(np.inf if ub is None else float(ub))
        return name

    def _terms(self, expr) -> list:
        items = expr.items() if isinstance(expr, dict) else expr
        terms = []
        for name, coef in items:
            idx = self._index.get(name)
            if idx is None:
                raise InvalidInputError(f"term references undeclared variable {name!r}")
            c = float(coef)
            if c != 0.0:
                terms.append((idx, c))
        return terms

    def add_constraint(self, expr, relation: str, rhs: float):
        """Add ``expr relation rhs`` where expr maps variable names to coefficients."""
        if relation not in _RELATIONS:
            raise InvalidInputError(f"unknown relation {relation!r}")
        self._rows.append((self._terms(expr), relation, float(rhs)))

    def set_objective(self, sense: str, expr):
        if sense not in ("min", "max"):
            raise InvalidInputError("objective sense must be 'min' or 'max'")
        self._sense = sense
        self._objective = self._terms(expr)

    def _matrices(self):
        n = self.num_variables
        c = np.zeros(n)
        for idx, coef in self._objective:
            c[idx] += coef
        ub_data, ub_rows, ub_cols, b_ub = [], [], [], []
        eq_data, eq_rows, eq_cols, b_eq = [], [], [], []
        for terms, rel, rhs in self._rows:
            if rel == EQ:
                r = len(b_eq)
                for idx, coef in terms:
                    eq_rows.append(r)
                    eq_cols.append(idx)
                    eq_data.append(coef)
                b_eq.append(rhs)
            else:
                sign = 1.0 if rel == LE else -1.0
                r = len(b_ub)
                for idx, coef in terms:
                    ub_rows.append(r)
                    ub_cols.append(idx)
                    ub_data.append(sign * coef)
                b_ub.append(sign * rhs)
        A_ub = sp.csr_matrix((ub_data, (ub_rows, ub_cols)),
                             shape=(len(b_ub), n)) if b_ub else None
        A_eq = sp.csr_matrix((eq_data, (eq_rows, eq_cols)),
                             shape=(len(b_eq), n)) if b_eq else None
        return c, A_ub, (np.array(b_ub) if b_ub else None), \
            A_eq, (np.array(b_eq) if b_eq else None)

    def to_lp_format(self) -> str:
        """Render the model in LP text format for external cross-checking."""
        names = [None] * self.num_variables
        for name, idx in self._index.items():
            names[idx] = name

        def expr_str(terms):
            if not terms:
                return "0 " + (names[0] if names else "x")
            parts = []
            for k, (idx, coef) in enumerate(terms):
                sign = "-" if coef < 0 else ("+" if k else "")
                parts.append(f"{sign} {abs(coef):.12g} {names[idx]}".strip())
            return " ".join(parts)

        lines = [f"\\ {self.name}",
                 "Maximize" if self._sense == "max" else "Minimize",
                 f" obj: {expr_str(self._objective)}",
                 "Subject To"]
        for r, (terms, rel, rhs) in enumerate(self._rows):
            op = {LE: "<=", EQ: "=", GE: ">="}[rel]
            lines.append(f" c{r}: {expr_str(terms)} {op} {rhs:.12g}")
        lines.append("Bounds")
        for idx, name in enumerate(names):
            lo, hi = self._lb[idx], self._ub[idx]
            if lo == -np.inf and hi == np.inf:
                lines.append(f" {name} free")
            elif hi == np.inf:
                lines.append(f" {name} >= {lo:.12g}")
            else:
                lines.append(f" {lo:.12g} <= {name} <= {hi:.12g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def solve(model: LpModel) -> LpSolution:
    """Optimize the model; raises SolverLimitError on solver breakdown."""
    if model.num_variables == 0:
        return LpSolution("optimal", {}, 0.0)
    c, A_ub, b_ub, A_eq, b_eq = model._matrices()
    sign = -1.0 if model._sense == "max" else 1.0
    res = linprog(sign * c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=list(zip(model._lb, model._ub)), method="highs")
    if res.status == 0:
        values = {name: float(res.x[idx]) for name, idx in model._index.items()}
        return LpSolution("optimal", values, float(sign * res.fun))
    if res.status == 2:
        return LpSolution("infeasible", {}, float("nan"))
    if res.status == 3:
        return LpSolution("unbounded", {}, float("inf"))
    raise SolverLimitError(f"solver did not converge: {res.message}")


def solve_feasibility(model: LpModel) -> LpSolution:
    """Feasibility check: solve with a zero objective."""
    saved_sense, saved_obj = model._sense, model._objective
    model._sense, model._objective = "min", []
    try:
        return solve(model)
    finally:
        model._sense, model._objective = saved_sense, saved_obj
