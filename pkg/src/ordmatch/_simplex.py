"""Exact rational simplex on a fraction-free integer tableau.

The tableau T stores determinant-scaled values (true value = T/det with
det > 0), so every pivot is integer arithmetic with an exact division --
no Fraction objects in the hot loop.  Bland's rule provides anti-cycling:
by default the entering column is chosen by steepest reduced cost, but a
run of degenerate pivots switches to Bland's smallest-index rule until the
objective strictly improves, which guarantees termination on the highly
degenerate metric polytopes this package feeds in.  `pivot_rule="bland"`
forces the pure rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Optional, Sequence

LESS, EQUAL, GREATER = "<=", "==", ">="

_DEGENERATE_STREAK = 16


@dataclass
class SimplexResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    value: Optional[Fraction] = None
    x: Optional[list[Fraction]] = None
    ray: Optional[list[Fraction]] = None


def _scale_to_int(coeffs: Sequence[Fraction | int], rhs=None):
    vals = [Fraction(c) for c in coeffs]
    if rhs is not None:
        vals.append(Fraction(rhs))
    denom = 1
    for v in vals:
        denom = denom * v.denominator // gcd(denom, v.denominator)
    ints = [int(v * denom) for v in vals]
    return ints, denom


class _Tableau:
    def __init__(self, n_vars: int, rows, senses, rhs):
        self.nv = n_vars
        m = len(rows)
        irows = []
        for coeffs, sense, b in zip(rows, senses, rhs):
            ints, _ = _scale_to_int(coeffs, b)
            coeffs, b = ints[:-1], ints[-1]
            if b < 0:
                coeffs = [-c for c in coeffs]
                b = -b
                sense = {LESS: GREATER, GREATER: LESS, EQUAL: EQUAL}[sense]
            irows.append((coeffs, sense, b))

        n_slack = sum(1 for _, s, _ in irows if s != EQUAL)
        n_art = sum(1 for _, s, _ in irows if s != LESS)
        self.ncols = self.nv + n_slack + n_art
        self.art_start = self.nv + n_slack
        self.T: list[list[int]] = []
        self.basis: list[int] = []
        self.det = 1
        slack_at = self.nv
        art_at = self.art_start
        for coeffs, sense, b in irows:
            row = coeffs + [0] * (self.ncols - self.nv) + [b]
            if sense != EQUAL:
                row[slack_at] = 1 if sense == LESS else -1
                slack_at += 1
            if sense == LESS:
                self.basis.append(slack_at - 1)
            else:
                row[art_at] = 1
                self.basis.append(art_at)
                art_at += 1
            self.T.append(row)
        self.allowed = [True] * self.ncols
        self.zrow: list[int] = []

    # -- pivoting ---------------------------------------------------------

    def pivot(self, p: int, q: int) -> None:
        T = self.T
        det = self.det
        prow = T[p]
        piv = prow[q]
        for r, row in enumerate(T):
            if r == p:
                continue
            f = row[q]
            if f:
                T[r] = [(piv * a - f * b) // det for a, b in zip(row, prow)]
            elif piv != det:
                T[r] = [piv * a // det for a in row]
        f = self.zrow[q]
        if f:
            self.zrow = [(piv * a - f * b) // det for a, b in zip(self.zrow, prow)]
        elif piv != det:
            self.zrow = [piv * a // det for a in self.zrow]
        self.det = piv
        self.basis[p] = q
        if self.det < 0:
            self.det = -self.det
            self.T = [[-a for a in row] for row in self.T]
            self.zrow = [-a for a in self.zrow]

    def set_objective(self, c_int: list[int]) -> None:
        """Reduced-cost row for integer objective c (len ncols), det-scaled."""
        z = [0] * (self.ncols + 1)
        for i, row in enumerate(self.T):
            cb = c_int[self.basis[i]]
            if cb:
                for j in range(self.ncols + 1):
                    z[j] += cb * row[j]
        for j in range(self.ncols):
            z[j] -= self.det * c_int[j]
        self.zrow = z

    def _entering(self, bland: bool) -> int:
        z = self.zrow
        if bland:
            for j in range(self.ncols):
                if self.allowed[j] and z[j] < 0:
                    return j
            return -1
        best, best_j = 0, -1
        for j in range(self.ncols):
            if self.allowed[j] and z[j] < best:
                best, best_j = z[j], j
        return best_j

    def _leaving(self, q: int) -> int:
        """Min-ratio row; Bland tie-break on the smallest basic index."""
        best = -1
        for i, row in enumerate(self.T):
            t = row[q]
            if t > 0:
                if best < 0:
                    best = i
                else:
                    lhs = row[-1] * self.T[best][q]
                    rhs = self.T[best][-1] * t
                    if lhs < rhs or (lhs == rhs and self.basis[i] < self.basis[best]):
                        best = i
        return best

    def optimize(self, pivot_rule: str) -> str:
        """Run primal simplex to optimality; returns 'optimal' or 'unbounded'."""
        force_bland = pivot_rule == "bland"
        streak = 0
        bland = force_bland
        while True:
            q = self._entering(bland)
            if q < 0:
                return "optimal"
            p = self._leaving(q)
            if p < 0:
                self._ray_col = q
                return "unbounded"
            degenerate = self.T[p][-1] == 0
            self.pivot(p, q)
            if force_bland:
                continue
            if degenerate:
                streak += 1
                if streak >= _DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

    # -- extraction -------------------------------------------------------

    def solution(self) -> list[Fraction]:
        x = [Fraction(0)] * self.nv
        for i, b in enumerate(self.basis):
            if b < self.nv:
                x[b] = Fraction(self.T[i][-1], self.det)
        return x

    def ray(self) -> list[Fraction]:
        q = self._ray_col
        r = [Fraction(0)] * self.nv
        if q < self.nv:
            r[q] = Fraction(1)
        for i, b in enumerate(self.basis):
            if b < self.nv:
                r[b] = Fraction(-self.T[i][q], self.det)
        return r

    def objective_value(self) -> Fraction:
        return Fraction(self.zrow[-1], self.det)


def solve_lp(
    objective: Sequence[Fraction | int],
    rows: Sequence[Sequence[Fraction | int]],
    senses: Sequence[str],
    rhs: Sequence[Fraction | int],
    maximize: bool = True,
    pivot_rule: str = "dantzig-bland",
) -> SimplexResult:
    """Solve max/min c.x subject to rows (senses, rhs) and x >= 0."""
    nv = len(objective)
    tab = _Tableau(nv, rows, senses, rhs)

    if tab.art_start < tab.ncols:
        phase1 = [0] * tab.ncols
        for j in range(tab.art_start, tab.ncols):
            phase1[j] = -1
        tab.set_objective(phase1)
        tab.optimize(pivot_rule)
        if tab.zrow[-1] != 0:
            return SimplexResult(status="infeasible")
        for i in range(len(tab.T)):
            if tab.basis[i] >= tab.art_start:
                q = next(
                    (
                        j
                        for j in range(tab.art_start)
                        if tab.T[i][j] != 0
                    ),
                    -1,
                )
                if q >= 0:
                    tab.pivot(i, q)
        keep = [i for i in range(len(tab.T)) if tab.basis[i] < tab.art_start]
        tab.T = [tab.T[i] for i in keep]
        tab.basis = [tab.basis[i] for i in keep]
        for j in range(tab.art_start, tab.ncols):
            tab.allowed[j] = False

    sign = 1 if maximize else -1
    c_frac = [sign * Fraction(c) for c in objective]
    c_int, c_den = _scale_to_int(c_frac)
    c_full = c_int + [0] * (tab.ncols - nv)
    tab.set_objective(c_full)
    status = tab.optimize(pivot_rule)
    if status == "unbounded":
        return SimplexResult(status="unbounded", x=tab.solution(), ray=tab.ray())
    value = sign * tab.objective_value() / c_den
    return SimplexResult(status="optimal", value=value, x=tab.solution())
