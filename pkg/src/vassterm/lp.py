"""Exact two-phase simplex over the rationals (Bland's rule).

Arithmetic runs on ``gmpy2.mpq``; every number handed back to callers is a
``fractions.Fraction``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

from gmpy2 import mpq

LE, GE, EQ = "<=", ">=", "="
_RELATIONS = (LE, GE, EQ)


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """Variables with optional lower bounds, linear constraints, objective.

    A lower bound of ``None`` makes the variable free.  Coefficient rows may be
    dense sequences or sparse ``{variable index: coefficient}`` mappings.
    """

    variables: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: tuple | None = None  # (row, "min" | "max"); None = feasibility

    def add_var(self, name: str, lower=0) -> int:
        self.variables.append(name)
        self.lower.append(None if lower is None else Fraction(lower))
        return len(self.variables) - 1

    def add_constraint(self, row, relation: str, rhs) -> None:
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        self.constraints.append((row, relation, Fraction(rhs)))

    def minimize(self, row) -> None:
        self.objective = (row, "min")

    def maximize(self, row) -> None:
        self.objective = (row, "max")

    def sparse(self, row) -> dict:
        if isinstance(row, Mapping):
            items = row.items()
        else:
            if len(row) != len(self.variables):
                raise ValueError(f"row has length {len(row)}, expected {len(self.variables)}")
            items = enumerate(row)
        out = {}
        for j, a in items:
            if not 0 <= j < len(self.variables):
                raise ValueError(f"coefficient for unknown variable {j}")
            if a:
                out[j] = out.get(j, Fraction(0)) + Fraction(a)
        return out


@dataclass(frozen=True)
class LpOutcome:
    status: Status
    value: Fraction | None = None
    assignment: dict | None = None  # variable name -> Fraction

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)

    def __getitem__(self, name: str) -> Fraction:
        return self.assignment[name]


def check_assignment(lp: LinearProgram, values: Sequence) -> list:
    """Constraints (by index) that ``values`` violates, in exact arithmetic."""
    bad = []
    for j, lo in enumerate(lp.lower):
        if lo is not None and values[j] < lo:
            bad.append(f"bound {lp.variables[j]}")
    for i, (row, rel, rhs) in enumerate(lp.constraints):
        lhs = sum((a * values[j] for j, a in lp.sparse(row).items()), Fraction(0))
        if (rel == LE and lhs > rhs) or (rel == GE and lhs < rhs) or (rel == EQ and lhs != rhs):
            bad.append(f"constraint {i}")
    return bad


class _Tableau:
    def __init__(self, rows, rhs, basis, ncols):
        self.rows = rows          # list of dense mpq lists, length ncols
        self.rhs = rhs            # list of mpq
        self.basis = basis        # basic column per row
        self.ncols = ncols

    def pivot(self, r: int, c: int, cost_rows) -> None:
        prow = self.rows[r]
        inv = 1 / prow[c]
        nz = [j for j in range(self.ncols) if prow[j]]
        for j in nz:
            prow[j] *= inv
        self.rhs[r] *= inv
        prhs = self.rhs[r]
        for k, row in enumerate(self.rows):
            if k == r:
                continue
            f = row[c]
            if f:
                for j in nz:
                    row[j] -= f * prow[j]
                self.rhs[k] -= f * prhs
        for cost in cost_rows:
            f = cost[0][c]
            if f:
                red = cost[0]
                for j in nz:
                    red[j] -= f * prow[j]
                cost[1] += f * prhs
        self.basis[r] = c

    def run(self, cost, allowed) -> bool:
        """Minimise with Bland's rule. Returns False when unbounded."""
        red = list(cost)
        obj = mpq(0)
        for i, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.rows[i]
                for j in range(self.ncols):
                    if row[j]:
                        red[j] -= cb * row[j]
                obj += cb * self.rhs[i]
        box = [red, obj]
        while True:
            enter = next((j for j in range(self.ncols) if allowed[j] and red[j] < 0), None)
            if enter is None:
                self.objective = box[1]
                return True
            best = None
            for i, row in enumerate(self.rows):
                a = row[enter]
                if a > 0:
                    ratio = self.rhs[i] / a
                    if best is None or ratio < best[0] or (ratio == best[0] and self.basis[i] < self.basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                return False
            self.pivot(best[1], enter, [box])
            red = box[0]


def solve_lp(lp: LinearProgram) -> LpOutcome:
    nvar = len(lp.variables)
    # column map: original variable -> list of (column, sign)
    colmap, ncols = [], 0
    for lo in lp.lower:
        if lo is None:
            colmap.append(((ncols, 1), (ncols + 1, -1)))
            ncols += 2
        else:
            colmap.append(((ncols, 1),))
            ncols += 1
    nstruct = ncols

    raw = []
    for row, rel, rhs in lp.constraints:
        coeffs = lp.sparse(row)
        b = rhs - sum((a * lp.lower[j] for j, a in coeffs.items() if lp.lower[j] is not None), Fraction(0))
        if b < 0:
            coeffs = {j: -a for j, a in coeffs.items()}
            b = -b
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        raw.append((coeffs, rel, b))

    n_slack = sum(1 for _, rel, _ in raw if rel != EQ)
    n_art = sum(1 for _, rel, _ in raw if rel != LE)
    total = nstruct + n_slack + n_art
    rows, rhs, basis = [], [], []
    is_art = [False] * total
    next_slack, next_art = nstruct, nstruct + n_slack
    for coeffs, rel, b in raw:
        row = [mpq(0)] * total
        for j, a in coeffs.items():
            for c, sign in colmap[j]:
                row[c] = mpq(a.numerator, a.denominator) * sign
        if rel == LE:
            row[next_slack] = mpq(1)
            basis.append(next_slack)
            next_slack += 1
        else:
            if rel == GE:
                row[next_slack] = mpq(-1)
                next_slack += 1
            row[next_art] = mpq(1)
            is_art[next_art] = True
            basis.append(next_art)
            next_art += 1
        rows.append(row)
        rhs.append(mpq(b.numerator, b.denominator))

    tab = _Tableau(rows, rhs, basis, total)
    allowed = [True] * total
    if n_art:
        phase1 = [mpq(1) if a else mpq(0) for a in is_art]
        tab.run(phase1, allowed)
        if tab.objective > 0:
            return LpOutcome(Status.INFEASIBLE)
        # drive zero-level artificials out of the basis; drop redundant rows
        r = 0
        while r < len(tab.rows):
            if is_art[tab.basis[r]]:
                c = next((j for j in range(total) if not is_art[j] and tab.rows[r][j]), None)
                if c is None:
                    del tab.rows[r], tab.rhs[r], tab.basis[r]
                    continue
                tab.pivot(r, c, [])
            r += 1
        allowed = [not a for a in is_art]

    cost_frac = {}
    if lp.objective is not None:
        obj_row, sense = lp.objective
        sign = 1 if sense == "min" else -1
        cost = [mpq(0)] * total
        for j, a in lp.sparse(obj_row).items():
            cost_frac[j] = a
            for c, s in colmap[j]:
                cost[c] += mpq(a.numerator, a.denominator) * s * sign
        if not tab.run(cost, allowed):
            return LpOutcome(Status.UNBOUNDED)

    colval = [mpq(0)] * total
    for i, b in enumerate(tab.basis):
        colval[b] = tab.rhs[i]
    values = []
    for j in range(nvar):
        v = sum((colval[c] * s for c, s in colmap[j]), mpq(0))
        v = Fraction(int(v.numerator), int(v.denominator))
        if lp.lower[j] is not None:
            v += lp.lower[j]
        values.append(v)
    violated = check_assignment(lp, values)
    if violated:  # pragma: no cover - would indicate a solver bug
        raise AssertionError(f"simplex produced an infeasible point: {violated}")
    assignment = dict(zip(lp.variables, values))
    if lp.objective is None:
        return LpOutcome(Status.FEASIBLE, None, assignment)
    value = sum((a * values[j] for j, a in cost_frac.items()), Fraction(0))
    return LpOutcome(Status.OPTIMAL, value, assignment)
