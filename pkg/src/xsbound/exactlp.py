"""Dense two-phase simplex over exact rationals with Bland's anti-cycling rule.

Rationals are gmpy2.mpq when available (much faster) and fractions.Fraction
otherwise; inputs and outputs are always Fraction.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

try:  # optional speedup
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

ZERO = _Q(0)
ONE = _Q(1)


def _q(x) -> "_Q":
    if isinstance(x, Fraction):
        return _Q(x.numerator, x.denominator)
    if hasattr(x, "__index__"):
        return _Q(int(x))
    return _Q(x)


def _frac(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


@dataclass
class LPResult:
    status: str  # optimal, infeasible, unbounded
    x: list | None = None
    value: Fraction | None = None


class _Tableau:
    def __init__(self, rows, rhs, basis):
        self.T = rows  # list of lists; last entry is rhs
        for r, b in zip(self.T, rhs):
            r.append(b)
        self.basis = basis

    def pivot(self, p, e):
        T = self.T
        row = T[p]
        piv = row[e]
        if piv != ONE:
            inv = ONE / piv
            row = [v * inv for v in row]
            T[p] = row
        nz = [i for i, v in enumerate(row) if v != 0]
        for r in range(len(T)):
            if r == p:
                continue
            f = T[r][e]
            if f != 0:
                tr = T[r]
                for i in nz:
                    tr[i] -= f * row[i]
        self.basis[p] = e

    def run(self, cost, allowed):
        """Maximize cost.x over the current tableau; cost indexed by column."""
        T = self.T
        while True:
            # reduced costs: c_j - c_B B^-1 A_j
            cb = [cost[b] for b in self.basis]
            inb = set(self.basis)
            enter = -1
            for j in allowed:
                if j in inb:
                    continue
                rc = cost[j]
                for r, c in enumerate(cb):
                    if c != 0:
                        v = T[r][j]
                        if v != 0:
                            rc -= c * v
                if rc > 0:
                    enter = j
                    break
            if enter < 0:
                return "optimal"
            leave, best = -1, None
            for r in range(len(T)):
                a = T[r][enter]
                if a > 0:
                    ratio = T[r][-1] / a
                    if (best is None or ratio < best
                            or (ratio == best and self.basis[r] < self.basis[leave])):
                        leave, best = r, ratio
            if leave < 0:
                return "unbounded"
            self.pivot(leave, enter)

    def value(self, cost):
        return sum((cost[b] * self.T[r][-1] for r, b in enumerate(self.basis)), ZERO)


def solve(c: Sequence, A_ub=(), b_ub=(), A_eq=(), b_eq=()) -> LPResult:
    """Maximize c.x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= 0."""
    n = len(c)
    rows, rhs, kinds = [], [], []
    for a, b in zip(A_ub, b_ub):
        rows.append([_q(v) for v in a])
        rhs.append(_q(b))
        kinds.append("le")
    for a, b in zip(A_eq, b_eq):
        rows.append([_q(v) for v in a])
        rhs.append(_q(b))
        kinds.append("eq")
    m = len(rows)
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-v for v in rows[i]]
            rhs[i] = -rhs[i]
            if kinds[i] == "le":
                kinds[i] = "ge"
    # column layout: x (n) | slack/surplus (one per inequality) | artificial
    n_slack = sum(1 for k in kinds if k != "eq")
    n_art = sum(1 for k in kinds if k != "le")
    width = n + n_slack + n_art
    full = []
    basis = []
    s_col, a_col = n, n + n_slack
    arts = []
    for i in range(m):
        r = rows[i] + [ZERO] * (width - n)
        if kinds[i] == "le":
            r[s_col] = ONE
            basis.append(s_col)
            s_col += 1
        elif kinds[i] == "ge":
            r[s_col] = -ONE
            s_col += 1
            r[a_col] = ONE
            basis.append(a_col)
            arts.append(a_col)
            a_col += 1
        else:
            r[a_col] = ONE
            basis.append(a_col)
            arts.append(a_col)
            a_col += 1
        full.append(r)
    tab = _Tableau(full, rhs, basis)
    if arts:
        cost1 = [ZERO] * width
        for a in arts:
            cost1[a] = -ONE
        tab.run(cost1, range(width))
        if tab.value(cost1) < 0:
            return LPResult("infeasible")
        art_set = set(arts)
        # drive remaining artificials out of the basis
        r = 0
        while r < len(tab.T):
            if tab.basis[r] in art_set:
                row = tab.T[r]
                e = next((j for j in range(n + n_slack) if row[j] != 0), -1)
                if e >= 0:
                    tab.pivot(r, e)
                else:
                    del tab.T[r]
                    del tab.basis[r]
                    continue
            r += 1
        allowed = range(n + n_slack)
    else:
        allowed = range(width)
    cost = [_q(v) for v in c] + [ZERO] * (width - n)
    status = tab.run(cost, allowed)
    if status == "unbounded":
        return LPResult("unbounded")
    x = [ZERO] * width
    for r, b in enumerate(tab.basis):
        x[b] = tab.T[r][-1]
    return LPResult("optimal", [_frac(v) for v in x[:n]], _frac(tab.value(cost)))


def solve_free(c: Sequence, A_ub=(), b_ub=(), A_eq=(), b_eq=(), nonneg: Sequence[bool] | None = None) -> LPResult:
    """Like ``solve`` but variables are free unless flagged in ``nonneg``."""
    n = len(c)
    nonneg = list(nonneg) if nonneg is not None else [False] * n
    free = [i for i in range(n) if not nonneg[i]]

    def split(a):
        return list(a) + [-a[i] for i in free]

    res = solve(split(c), [split(a) for a in A_ub], b_ub, [split(a) for a in A_eq], b_eq)
    if res.status != "optimal":
        return res
    x = list(res.x[:n])
    for k, i in enumerate(free):
        x[i] -= res.x[n + k]
    return LPResult("optimal", x, res.value)
