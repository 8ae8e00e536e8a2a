"""Dense two-phase simplex with Bland's rule.

Sized for desk-scale traffic-engineering LPs (tens of paths and links). The
tableau is a plain numpy array; pivoting is deterministic (lowest-index entering
column, lowest-index leaving basic variable on ratio ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from greente.errors import SolverFailure

LE, EQ, GE = "<=", "=", ">="

#: entries at or below this are not eligible as pivots
PIVOT_TOL = 1e-9
#: pivots this small mean the tableau is numerically unusable
BREAKDOWN_TOL = 1e-11
COST_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[float, ...]
    relation: str
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.relation not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {self.relation!r}")
        if not math.isfinite(self.rhs):
            raise ValueError("rhs must be finite")


@dataclass(frozen=True)
class LpProblem:
    """Minimize ``objective @ x`` subject to ``constraints`` and ``bounds``.

    ``bounds`` defaults to ``[0, inf)`` for every variable. Lower bounds must be
    finite.
    """

    objective: tuple[float, ...]
    constraints: tuple[Constraint, ...] = ()
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "objective", tuple(float(c) for c in self.objective))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = len(self.objective)
        if n == 0:
            raise ValueError("LP needs at least one variable")
        for k, row in enumerate(self.constraints):
            if len(row.coeffs) != n:
                raise ValueError(f"constraint {k} has {len(row.coeffs)} coefficients, expected {n}")
        if self.bounds is None:
            object.__setattr__(self, "bounds", tuple((0.0, math.inf) for _ in range(n)))
        else:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != n:
                raise ValueError("bounds length does not match variable count")
            for lo, hi in bounds:
                if not math.isfinite(lo):
                    raise ValueError("lower bounds must be finite")
                if hi < lo:
                    raise ValueError("empty variable range")
            object.__setattr__(self, "bounds", bounds)

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def violations(self, values: Sequence[float], tol: float = FEAS_TOL) -> list[str]:
        """Human-readable list of constraints/bounds broken by ``values``."""
        x = np.asarray(values, dtype=float)
        out = []
        for j, (lo, hi) in enumerate(self.bounds):
            if x[j] < lo - tol or x[j] > hi + tol:
                out.append(f"bound x{j}={x[j]!r} not in [{lo}, {hi}]")
        for k, row in enumerate(self.constraints):
            lhs = float(np.dot(row.coeffs, x))
            bad = (
                (row.relation == LE and lhs > row.rhs + tol)
                or (row.relation == GE and lhs < row.rhs - tol)
                or (row.relation == EQ and abs(lhs - row.rhs) > tol)
            )
            if bad:
                out.append(f"row {k}: {lhs!r} {row.relation} {row.rhs!r}")
        return out


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    values: tuple[float, ...] = ()
    objective_value: float = math.nan
    pivots: int = field(default=0, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    def __init__(self, rows: np.ndarray, rhs: np.ndarray, basis: list[int], n_cols: int):
        m = rows.shape[0]
        self.t = np.zeros((m + 1, n_cols + 1))
        self.t[:m, :n_cols] = rows
        self.t[:m, -1] = rhs
        self.basis = basis
        self.pivots = 0

    @property
    def m(self) -> int:
        return self.t.shape[0] - 1

    def set_cost(self, cost: np.ndarray) -> None:
        self.t[-1, :-1] = cost
        self.t[-1, -1] = 0.0
        for r, b in enumerate(self.basis):
            if self.t[-1, b] != 0.0:
                self.t[-1] -= self.t[-1, b] * self.t[r]

    def pivot(self, r: int, c: int) -> None:
        p = self.t[r, c]
        if abs(p) < BREAKDOWN_TOL:
            raise SolverFailure("pivot element below breakdown tolerance", {"row": r, "col": c, "pivot": p})
        self.t[r] /= p
        col = self.t[:, c].copy()
        col[r] = 0.0
        self.t -= np.outer(col, self.t[r])
        self.t[:, c] = 0.0
        self.t[r, c] = 1.0
        self.basis[r] = c
        self.pivots += 1

    def run(self, allowed: int, max_pivots: int) -> str:
        """Minimize the cost row over the first ``allowed`` columns."""
        while True:
            if self.pivots >= max_pivots:
                raise SolverFailure("pivot limit reached", {"pivots": self.pivots})
            reduced = self.t[-1, :allowed]
            candidates = np.flatnonzero(reduced < -COST_TOL)
            if candidates.size == 0:
                return "optimal"
            c = int(candidates[0])
            col = self.t[:-1, c]
            eligible = np.flatnonzero(col > PIVOT_TOL)
            if eligible.size == 0:
                if np.any(col > BREAKDOWN_TOL):
                    raise SolverFailure(
                        "entering column has only near-zero positive entries",
                        {"col": c, "max_entry": float(col.max())},
                    )
                return "unbounded"
            ratios = self.t[eligible, -1] / col[eligible]
            best = ratios.min()
            ties = eligible[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = min(ties, key=lambda i: self.basis[i])
            self.pivot(int(r), c)

    def dump(self, path: Path) -> None:
        with open(path, "w") as fh:
            fh.write("basis\t" + "\t".join(f"c{j}" for j in range(self.t.shape[1] - 1)) + "\trhs\n")
            for r in range(self.t.shape[0]):
                label = f"x{self.basis[r]}" if r < self.m else "cost"
                fh.write(label + "\t" + "\t".join(repr(float(v)) for v in self.t[r]) + "\n")


def solve(problem: LpProblem, *, dump_dir: str | Path | None = None, max_pivots: int = 50_000) -> LpSolution:
    """Solve ``problem`` exactly (up to floating point) with two-phase simplex.

    When ``dump_dir`` is given the final phase-1 and phase-2 tableaux are written
    there as TSV files for inspection.
    """
    n = problem.n_vars
    lo = np.array([b[0] for b in problem.bounds])
    hi = np.array([b[1] for b in problem.bounds])

    # shift x = lo + y, y >= 0; finite upper bounds become rows
    rows, rels, rhs = [], [], []
    for con in problem.constraints:
        a = np.array(con.coeffs)
        rows.append(a)
        rels.append(con.relation)
        rhs.append(con.rhs - float(a @ lo))
    for j in np.flatnonzero(np.isfinite(hi)):
        a = np.zeros(n)
        a[j] = 1.0
        rows.append(a)
        rels.append(LE)
        rhs.append(hi[j] - lo[j])
    m = len(rows)
    cost = np.array(problem.objective)
    if m == 0:
        if np.any(cost < 0):
            return LpSolution("unbounded")
        return LpSolution("optimal", tuple(lo.tolist()), float(cost @ lo))

    A = np.array(rows, dtype=float).reshape(m, n)
    b = np.array(rhs, dtype=float)
    for r in range(m):
        if b[r] < 0:
            A[r] *= -1
            b[r] *= -1
            rels[r] = {LE: GE, GE: LE, EQ: EQ}[rels[r]]

    n_slack = sum(rel != EQ for rel in rels)
    n_art = sum(rel != LE for rel in rels)
    n_cols = n + n_slack + n_art
    full = np.zeros((m, n_cols))
    full[:, :n] = A
    basis = []
    s = n
    art = n + n_slack
    for r, rel in enumerate(rels):
        if rel == LE:
            full[r, s] = 1.0
            basis.append(s)
            s += 1
        elif rel == GE:
            full[r, s] = -1.0
            s += 1
            full[r, art] = 1.0
            basis.append(art)
            art += 1
        else:
            full[r, art] = 1.0
            basis.append(art)
            art += 1

    tab = _Tableau(full, b, basis, n_cols)
    first_art = n + n_slack
    if n_art:
        phase1 = np.zeros(n_cols)
        phase1[first_art:] = 1.0
        tab.set_cost(phase1)
        tab.run(n_cols, max_pivots)
        if dump_dir is not None:
            tab.dump(Path(dump_dir) / "phase1.tsv")
        if -tab.t[-1, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max())):
            return LpSolution("infeasible", pivots=tab.pivots)
        # drive remaining artificials out of the basis; drop redundant rows
        r = 0
        while r < tab.m:
            if tab.basis[r] >= first_art:
                row = tab.t[r, :first_art]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    tab.t = np.delete(tab.t, r, axis=0)
                    del tab.basis[r]
                    continue
            r += 1

    phase2 = np.zeros(n_cols)
    phase2[:n] = cost
    tab.set_cost(phase2)
    status = tab.run(first_art, max_pivots)
    if dump_dir is not None:
        tab.dump(Path(dump_dir) / "phase2.tsv")
    if status == "unbounded":
        return LpSolution("unbounded", pivots=tab.pivots)

    y = np.zeros(n_cols)
    for r, bvar in enumerate(tab.basis):
        y[bvar] = tab.t[r, -1]
    x = lo + y[:n]
    x = np.where(np.abs(x) < 1e-13, 0.0, x)
    return LpSolution("optimal", tuple(x.tolist()), float(cost @ x), pivots=tab.pivots)
