"""Exact dyadic summation analysis.

Every dyadic variable A is tracked through x_A = log2 A. A product of powers
becomes a linear form in x, and a dyadic sum over a polyhedron of such forms is
bounded, logarithmically divergent, or divergent depending only on the
geometry of the polyhedron's recession cone. All arithmetic is rational.

Roles: ``sum`` variables are summed over dyadic values, ``sup`` variables are
uniform parameters (the bound must hold uniformly in them).
"""
from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import exactlp

Q = Fraction


# expressions


class Expr:
    def __mul__(self, other):
        other = _as_expr(other)
        if isinstance(self, Mono) and isinstance(other, Mono):
            return self._mul(other)
        return Prod((self, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (_as_expr(other) ** -1)

    def __rtruediv__(self, other):
        return _as_expr(other) * self ** -1

    def __pow__(self, q):
        q = Q(q)
        if isinstance(self, Mono):
            return self._pow(q)
        return Pow(self, q)


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if x == 1:
        return ONE
    raise TypeError(f"cannot use {x!r} in a dyadic expression (constants are dropped)")


@dataclass(frozen=True)
class Mono(Expr):
    exps: tuple = ()  # sorted (var, Fraction) pairs, no zeros

    @staticmethod
    def of(d: Mapping[str, Fraction]) -> "Mono":
        return Mono(tuple(sorted((v, Q(q)) for v, q in d.items() if Q(q) != 0)))

    @property
    def d(self) -> dict:
        return dict(self.exps)

    def _mul(self, other: "Mono") -> "Mono":
        d = self.d
        for v, q in other.exps:
            d[v] = d.get(v, Q(0)) + q
        return Mono.of(d)

    def _pow(self, q) -> "Mono":
        return Mono.of({v: e * q for v, e in self.exps})

    def __repr__(self):
        return format_expr(self)


ONE = Mono()


def var(name: str) -> Mono:
    return Mono(((name, Q(1)),))


@dataclass(frozen=True)
class Prod(Expr):
    terms: tuple

    def __repr__(self):
        return format_expr(self)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    q: Fraction

    def __repr__(self):
        return format_expr(self)


@dataclass(frozen=True)
class Min(Expr):
    args: tuple

    def __repr__(self):
        return format_expr(self)


@dataclass(frozen=True)
class Max(Expr):
    args: tuple

    def __repr__(self):
        return format_expr(self)


@dataclass(frozen=True)
class Med(Expr):
    args: tuple

    def __post_init__(self):
        if len(self.args) != 3:
            raise ValueError("med takes exactly three arguments")

    def __repr__(self):
        return format_expr(self)


def emin(*args) -> Expr:
    args = _dedupe(args)
    return args[0] if len(args) == 1 else Min(args)


def emax(*args) -> Expr:
    args = _dedupe(args)
    return args[0] if len(args) == 1 else Max(args)


def emed(a, b, c) -> Expr:
    return Med((_as_expr(a), _as_expr(b), _as_expr(c)))


def bracket(e) -> Expr:
    """Japanese bracket <e> = max(1, |e|) in dyadic form."""
    return Max((ONE, _as_expr(e)))


def _dedupe(args):
    out = []
    for a in args:
        a = _as_expr(a)
        if a not in out:
            out.append(a)
    return tuple(out)


def prod(factors: Iterable) -> Expr:
    out = ONE
    for f in factors:
        out = out * f
    return out


def variables(e: Expr) -> set:
    if isinstance(e, Mono):
        return {v for v, _ in e.exps}
    if isinstance(e, Prod):
        return set().union(*[variables(t) for t in e.terms])
    if isinstance(e, Pow):
        return variables(e.base)
    return set().union(*[variables(a) for a in e.args])


def eval_log(e: Expr, env: Mapping[str, Fraction]) -> Fraction:
    """log2 of the expression when each variable V has log2 value env[V]."""
    if isinstance(e, Mono):
        return sum((q * Q(env[v]) for v, q in e.exps), Q(0))
    if isinstance(e, Prod):
        return sum((eval_log(t, env) for t in e.terms), Q(0))
    if isinstance(e, Pow):
        return e.q * eval_log(e.base, env)
    vals = [eval_log(a, env) for a in e.args]
    if isinstance(e, Min):
        return min(vals)
    if isinstance(e, Max):
        return max(vals)
    return sorted(vals)[1]


def evaluate(e: Expr, values: Mapping[str, float]) -> float:
    """Numeric value; ``values`` are the (positive) variable values."""
    import math
    env = {v: Q(math.log2(x)).limit_denominator(1 << 40) if not _is_pow2(x) else Q(_log2_exact(x))
           for v, x in values.items()}
    return 2.0 ** float(eval_log(e, env))


def _is_pow2(x) -> bool:
    x = Q(x)
    n, d = x.numerator, x.denominator
    return n > 0 and (n & (n - 1)) == 0 and (d & (d - 1)) == 0


def _log2_exact(x) -> int:
    x = Q(x)
    return x.numerator.bit_length() - x.denominator.bit_length()


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Mono):
        out = ONE
        for v, q in e.exps:
            base = mapping.get(v, var(v))
            out = out * (base ** q)
        return out
    if isinstance(e, Prod):
        return prod(substitute(t, mapping) for t in e.terms)
    if isinstance(e, Pow):
        return substitute(e.base, mapping) ** e.q
    args = tuple(substitute(a, mapping) for a in e.args)
    if isinstance(e, Min):
        return emin(*args)
    if isinstance(e, Max):
        return emax(*args)
    return Med(args)


# linear constraints in log coordinates


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple  # sorted (var, Fraction)
    op: str  # "<=" or "="
    rhs: Fraction = Q(0)

    @staticmethod
    def make(d: Mapping[str, Fraction], op: str, rhs=0) -> "Constraint":
        if op not in ("<=", "="):
            raise ValueError("op must be <= or =")
        return Constraint(tuple(sorted((v, Q(q)) for v, q in d.items() if Q(q) != 0)), op, Q(rhs))

    @property
    def d(self):
        return dict(self.coeffs)

    def holds(self, env) -> bool:
        lhs = sum((q * Q(env[v]) for v, q in self.coeffs), Q(0))
        return lhs <= self.rhs if self.op == "<=" else lhs == self.rhs

    def __repr__(self):
        return format_constraint(self)


def _lin(a: Expr) -> dict:
    if not isinstance(a, Mono):
        raise TypeError("constraints need monomials; resolve min/max first")
    return a.d


def _diff(a: Expr, b: Expr) -> dict:
    d = _lin(a)
    for v, q in _lin(b).items():
        d[v] = d.get(v, Q(0)) - q
    return d


def leq(a, b) -> Constraint:
    """a <~ b, i.e. x_a <= x_b."""
    return Constraint.make(_diff(_as_expr(a), _as_expr(b)), "<=")


def geq(a, b) -> Constraint:
    return leq(b, a)


def sim(a, b) -> Constraint:
    """a ~ b, i.e. x_a = x_b."""
    return Constraint.make(_diff(_as_expr(a), _as_expr(b)), "=")


def at_least_one(v: str) -> Constraint:
    return leq(ONE, var(v))


def at_most_one(v: str) -> Constraint:
    return leq(var(v), ONE)


class Verdict(IntEnum):
    Converges = 0
    LogDivergent = 1
    Diverges = 2


@dataclass
class CaseVerdict:
    constraints: tuple
    objective: Mono
    verdict: Verdict
    empty: bool = False
    witness_ray: dict | None = None
    companion_ray: dict | None = None
    log_degree: int = 0
    label: str = ""

    def to_record(self) -> dict:
        def ray(r):
            return None if r is None else {k: str(v) for k, v in r.items()}
        return {
            "label": self.label,
            "constraints": [format_constraint(c) for c in self.constraints],
            "objective": format_expr(self.objective),
            "verdict": "Empty" if self.empty else self.verdict.name,
            "witness_ray": ray(self.witness_ray),
            "companion_ray": ray(self.companion_ray),
            "log_degree": self.log_degree,
        }


@dataclass
class ProblemVerdict:
    verdict: Verdict
    cases: list
    empty: bool = False
    label: str = ""

    @property
    def log_degree(self) -> int:
        return max((c.log_degree for c in self.cases if c.verdict == Verdict.LogDivergent), default=0)

    def to_record(self) -> dict:
        return {"label": self.label, "verdict": self.verdict.name, "empty": self.empty,
                "log_degree": self.log_degree, "cases": [c.to_record() for c in self.cases]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_record(), **kw)


@dataclass(frozen=True)
class DyadicSumProblem:
    variables: tuple
    roles: tuple  # (var, role) pairs
    constraints: tuple
    objective: Expr
    label: str = ""

    def __post_init__(self):
        rd = dict(self.roles)
        for v in self.variables:
            if rd.get(v) not in ("sum", "sup"):
                raise ValueError(f"variable {v} needs role sum or sup")
        known = set(self.variables)
        for c in self.constraints:
            for v, _ in c.coeffs:
                if v not in known:
                    raise ValueError(f"constraint uses undeclared variable {v}")
        if not variables(self.objective) <= known:
            raise ValueError("objective uses undeclared variables")

    @staticmethod
    def build(roles: Mapping[str, str], constraints: Sequence[Constraint], objective: Expr,
              label: str = "") -> "DyadicSumProblem":
        vs = tuple(roles)
        return DyadicSumProblem(vs, tuple((v, roles[v]) for v in vs), tuple(constraints),
                                objective, label)

    @property
    def role(self) -> dict:
        return dict(self.roles)

    def with_objective(self, objective: Expr, label: str | None = None) -> "DyadicSumProblem":
        return DyadicSumProblem(self.variables, self.roles, self.constraints, objective,
                                self.label if label is None else label)

    def with_constraints(self, extra: Sequence[Constraint]) -> "DyadicSumProblem":
        return DyadicSumProblem(self.variables, self.roles, self.constraints + tuple(extra),
                                self.objective, self.label)


# LP plumbing


def _rows(constraints, vs):
    pos = {v: i for i, v in enumerate(vs)}
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for c in constraints:
        row = [Q(0)] * len(vs)
        for v, q in c.coeffs:
            row[pos[v]] = q
        if c.op == "<=":
            A_ub.append(row)
            b_ub.append(c.rhs)
        else:
            A_eq.append(row)
            b_eq.append(c.rhs)
    return A_ub, b_ub, A_eq, b_eq


def feasible_point(constraints, vs):
    A_ub, b_ub, A_eq, b_eq = _rows(constraints, vs)
    res = exactlp.solve_free([Q(0)] * len(vs), A_ub, b_ub, A_eq, b_eq)
    if res.status == "infeasible":
        return None
    return dict(zip(vs, res.x))


def _strictly_admissible(constraints, vs, strict: Sequence[dict], weak: Sequence[dict]) -> bool:
    """Is there a point of the region with g < 0 for g in strict and g <= 0 for g in weak?"""
    n = len(vs)
    pos = {v: i for i, v in enumerate(vs)}
    A_ub, b_ub, A_eq, b_eq = _rows(constraints, vs)
    A_ub = [r + [Q(0)] for r in A_ub]
    A_eq = [r + [Q(0)] for r in A_eq]
    for g in weak:
        row = [Q(0)] * (n + 1)
        for v, q in g.items():
            row[pos[v]] += q
        A_ub.append(row)
        b_ub.append(Q(0))
    for g in strict:
        row = [Q(0)] * (n + 1)
        for v, q in g.items():
            row[pos[v]] += q
        row[n] = Q(1)
        A_ub.append(row)
        b_ub.append(Q(0))
    t_row = [Q(0)] * n + [Q(1)]
    A_ub.append(t_row)
    b_ub.append(Q(1))
    c = [Q(0)] * n + [Q(1)]
    res = exactlp.solve_free(c, A_ub, b_ub, A_eq, b_eq)
    if res.status != "optimal":
        return False
    return (res.value > 0) if strict else True


def _cone_rows(constraints, vs):
    """Recession cone: homogeneous parts of the constraints."""
    A_ub, _, A_eq, _ = _rows(constraints, vs)
    return A_ub, A_eq


def _split(row):
    return list(row) + [-v for v in row]


def _max_on_cone(c, constraints, vs):
    """max c.r over the cone with ||r||_1 <= 1. Returns (value, r)."""
    n = len(vs)
    A_ub, A_eq = _cone_rows(constraints, vs)
    ub = [_split(r) for r in A_ub] + [[Q(1)] * (2 * n)]
    bub = [Q(0)] * len(A_ub) + [Q(1)]
    eq = [_split(r) for r in A_eq]
    beq = [Q(0)] * len(A_eq)
    res = exactlp.solve(_split(c), ub, bub, eq, beq)
    r = [res.x[i] - res.x[n + i] for i in range(n)]
    return res.value, r


def _relint_face(c, constraints, vs):
    """Relative interior ray of F = cone and {c.r = 0}; returns (r, implicit row ids)."""
    n = len(vs)
    A_ub, A_eq = _cone_rows(constraints, vs)
    m = len(A_ub)
    # variables: p (n), q (n), s (m)
    ub, bub = [], []
    for i, row in enumerate(A_ub):
        s = [Q(0)] * m
        s[i] = Q(1)
        ub.append(_split(row) + s)
        bub.append(Q(0))
    for i in range(m):
        s = [Q(0)] * m
        s[i] = Q(1)
        ub.append([Q(0)] * (2 * n) + s)
        bub.append(Q(1))
    eq = [_split(r) + [Q(0)] * m for r in A_eq] + [_split(c) + [Q(0)] * m]
    beq = [Q(0)] * len(eq)
    obj = [Q(0)] * (2 * n) + [Q(1)] * m
    res = exactlp.solve(obj, ub, bub, eq, beq)
    r = [res.x[i] - res.x[n + i] for i in range(n)]
    s = res.x[2 * n:]
    implicit = [i for i in range(m) if s[i] == 0]
    return r, implicit, A_ub, A_eq


def nullspace(rows: Sequence[Sequence[Fraction]], n: int) -> list[list[Fraction]]:
    """Exact basis of {x : rows . x = 0} by Gauss-Jordan elimination."""
    M = [list(map(Q, r)) for r in rows if any(v != 0 for v in r)]
    pivots = []
    r = 0
    for col in range(n):
        p = next((i for i in range(r, len(M)) if M[i][col] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        inv = 1 / M[r][col]
        M[r] = [v * inv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][col] != 0:
                f = M[i][col]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(col)
        r += 1
        if r == len(M):
            break
    free = [j for j in range(n) if j not in pivots]
    basis = []
    for fj in free:
        v = [Q(0)] * n
        v[fj] = Q(1)
        for i, pc in enumerate(pivots):
            v[pc] = -M[i][fj]
        basis.append(v)
    return basis


def sum_verdict(objective: Mono, constraints: Sequence[Constraint], vs: Sequence[str],
                roles: Mapping[str, str], label: str = "") -> CaseVerdict:
    """Classify sup_{sup vars} sum_{sum vars} 2^{objective . x} over the region."""
    constraints = tuple(constraints)
    vs = list(vs)
    if feasible_point(constraints, vs) is None:
        return CaseVerdict(constraints, objective, Verdict.Converges, empty=True, label=label)
    od = objective.d
    unknown = set(od) - set(vs)
    if unknown:
        raise ValueError(f"objective uses undeclared variables {sorted(unknown)}")
    c = [od.get(v, Q(0)) for v in vs]
    val, r = _max_on_cone(c, constraints, vs)
    if val > 0:
        return CaseVerdict(constraints, objective, Verdict.Diverges,
                           witness_ray=dict(zip(vs, r)), label=label)
    rstar, implicit, A_ub, A_eq = _relint_face(c, constraints, vs)
    n = len(vs)
    span_rows = list(A_eq) + [c] + [A_ub[i] for i in implicit]
    sup_rows = []
    for i, v in enumerate(vs):
        if roles[v] == "sup":
            e = [Q(0)] * n
            e[i] = Q(1)
            sup_rows.append(e)
    flat = nullspace(span_rows + sup_rows, n)
    if not flat:
        return CaseVerdict(constraints, objective, Verdict.Converges, label=label)
    d = flat[0]
    non_implicit = [A_ub[i] for i in range(len(A_ub)) if i not in implicit]
    big = max((abs(sum(a * b for a, b in zip(row, d))) for row in non_implicit), default=Q(0))
    t = 1 / (big + 1)
    plus = [a + t * b for a, b in zip(rstar, d)]
    minus = [a - t * b for a, b in zip(rstar, d)]
    sum_idx = [i for i, v in enumerate(vs) if roles[v] == "sum"]
    if not any(plus[i] != 0 for i in sum_idx):
        plus, minus = minus, plus
    return CaseVerdict(constraints, objective, Verdict.LogDivergent,
                       witness_ray=dict(zip(vs, plus)), companion_ray=dict(zip(vs, minus)),
                       log_degree=len(flat), label=label)


def check_witness(case: CaseVerdict, vs: Sequence[str], roles: Mapping[str, str]) -> bool:
    """Substitute the witness rays back into the cone and the objective."""
    if case.witness_ray is None:
        return case.verdict == Verdict.Converges
    od = case.objective.d

    def in_cone(r):
        for con in case.constraints:
            lhs = sum((q * r[v] for v, q in con.coeffs), Q(0))
            if con.op == "<=" and lhs > 0:
                return False
            if con.op == "=" and lhs != 0:
                return False
        return True

    def obj(r):
        return sum((q * r[v] for v, q in od.items()), Q(0))

    r = case.witness_ray
    if not in_cone(r):
        return False
    if case.verdict == Verdict.Diverges:
        return obj(r) > 0
    r2 = case.companion_ray
    if r2 is None or not in_cone(r2) or obj(r) != 0 or obj(r2) != 0:
        return False
    same_sup = all(r[v] == r2[v] for v in vs if roles[v] == "sup")
    differs = any(r[v] != r2[v] for v in vs if roles[v] == "sum")
    has_sum = any(r[v] != 0 for v in vs if roles[v] == "sum")
    return same_sup and differs and has_sum


# min / max / med resolution


def resolve_minmax(e: Expr, constraints: Sequence[Constraint], vs: Sequence[str]):
    """Split the region so that every min/max/med atom picks a definite argument.

    Returns a list of (constraints, Mono). Ties are broken by argument order so
    that no emitted case is a lower-dimensional copy of another.
    """
    return _resolve(e, tuple(constraints), list(vs))


def _resolve(e, cons, vs):
    if isinstance(e, Mono):
        return [(cons, e)]
    if isinstance(e, Prod):
        cases = [(cons, ONE)]
        for t in e.terms:
            nxt = []
            for c0, m0 in cases:
                for c1, m1 in _resolve(t, c0, vs):
                    nxt.append((c1, m0 * m1))
            cases = nxt
        return cases
    if isinstance(e, Pow):
        return [(c, m ** e.q) for c, m in _resolve(e.base, cons, vs)]
    # resolve the arguments jointly first
    arg_cases = [(cons, [])]
    for a in e.args:
        nxt = []
        for c0, ms in arg_cases:
            for c1, m1 in _resolve(a, c0, vs):
                nxt.append((c1, ms + [m1]))
        arg_cases = nxt
    out = []
    for c0, ms in arg_cases:
        out.extend(_choose(e, c0, ms, vs))
    return out


def _extend(cons, forms):
    out = list(cons)
    for g in forms:
        c = Constraint.make(g, "<=")
        if c.coeffs and c not in out:
            out.append(c)
    return tuple(out)


def _choose(e, cons, ms, vs):
    k = len(ms)
    out = []
    if isinstance(e, (Min, Max)):
        for i in range(k):
            # Max: m_j <= m_i (strict for j < i); Min: m_i <= m_j (strict for j < i)
            strict, weak = [], []
            for j in range(k):
                if j == i:
                    continue
                g = _diff(ms[j], ms[i]) if isinstance(e, Max) else _diff(ms[i], ms[j])
                (strict if j < i else weak).append(g)
            if _strictly_admissible(cons, vs, strict, weak):
                newc = _extend(cons, strict + weak)
                out.append((newc, ms[i]))
        return out
    # median of three: for each order (lo, mid, hi) with index tie-breaking
    for perm in itertools.permutations(range(3)):
        lo, mid, hi = perm
        strict, weak = [], []
        for a, b in ((lo, mid), (mid, hi)):
            g = _diff(ms[a], ms[b])
            (strict if b < a else weak).append(g)
        if _strictly_admissible(cons, vs, strict, weak):
            newc = _extend(cons, strict + weak)
            out.append((newc, ms[mid]))
    return out


# problems


def solve_problem(p: DyadicSumProblem) -> ProblemVerdict:
    vs = list(p.variables)
    roles = p.role
    pieces = resolve_minmax(p.objective, p.constraints, vs)
    cases = []
    for i, (cons, mono) in enumerate(pieces):
        cases.append(sum_verdict(mono, cons, vs, roles, label=f"{p.label}#{i}" if p.label else f"#{i}"))
    live = [c for c in cases if not c.empty]
    if not live:
        return ProblemVerdict(Verdict.Converges, cases, empty=True, label=p.label)
    worst = max(c.verdict for c in live)
    return ProblemVerdict(Verdict(worst), cases, label=p.label)


def worst(verdicts: Iterable[ProblemVerdict]) -> Verdict:
    return Verdict(max((v.verdict for v in verdicts), default=Verdict.Converges))


def schur_refine(p: DyadicSumProblem, v: str) -> DyadicSumProblem:
    """Treat a summed variable as a supremum (an orthogonality argument)."""
    rd = p.role
    if v not in rd:
        raise ValueError(f"unknown variable {v}")
    rd[v] = "sup"
    return DyadicSumProblem(p.variables, tuple((w, rd[w]) for w in p.variables), p.constraints,
                            p.objective, p.label)


def growth_exponent(p: DyadicSumProblem, v: str) -> Fraction | None:
    """Largest rate of growth of the objective along rays with x_v = 1.

    Returns None when no piece of the region extends in the v direction.
    """
    vs = list(p.variables)
    pos = vs.index(v)
    best = None
    for cons, mono in resolve_minmax(p.objective, p.constraints, vs):
        if feasible_point(cons, vs) is None:
            continue
        od = mono.d
        c = [od.get(w, Q(0)) for w in vs]
        A_ub, A_eq = _cone_rows(cons, vs)
        e = [Q(0)] * len(vs)
        e[pos] = Q(1)
        res = exactlp.solve_free(c, A_ub, [Q(0)] * len(A_ub), A_eq + [e], [Q(0)] * len(A_eq) + [Q(1)])
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            return None
        best = res.value if best is None else max(best, res.value)
    return best


# text format


_TERM = re.compile(r"\s*([+-]?)\s*(?:(\d+(?:/\d+)?)\s*\*\s*)?([A-Za-z_]\w*)")


def format_q(q: Fraction) -> str:
    q = Q(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_constraint(c: Constraint) -> str:
    parts = []
    for v, q in c.coeffs:
        coef = "" if abs(q) == 1 else f"{format_q(abs(q))}*"
        parts.append(("- " if q < 0 else "+ ") + coef + v)
    lhs = " ".join(parts).lstrip("+ ") if parts else "0"
    if lhs.startswith("- "):
        lhs = "-" + lhs[2:]
    return f"{lhs} {c.op} {format_q(c.rhs)}"


def parse_constraint(s: str) -> Constraint:
    m = re.match(r"^(.*?)(<=|>=|=)(.*)$", s.strip())
    if not m:
        raise ValueError(f"bad constraint: {s!r}")
    lhs, op, rhs = m.group(1), m.group(2), m.group(3)
    d = {}
    pos = 0
    lhs = lhs.strip()
    while pos < len(lhs):
        t = _TERM.match(lhs, pos)
        if not t or t.end() == pos:
            raise ValueError(f"bad linear form: {lhs!r}")
        sign = -1 if t.group(1) == "-" else 1
        coef = Q(t.group(2)) if t.group(2) else Q(1)
        d[t.group(3)] = d.get(t.group(3), Q(0)) + sign * coef
        pos = t.end()
        while pos < len(lhs) and lhs[pos] == " ":
            pos += 1
    c = Q(rhs.strip())
    if op == ">=":
        return Constraint.make({k: -v for k, v in d.items()}, "<=", -c)
    return Constraint.make(d, op, c)


def format_expr(e: Expr) -> str:
    if isinstance(e, Mono):
        if not e.exps:
            return "1"
        out = []
        for v, q in e.exps:
            out.append(v if q == 1 else f"{v}^({format_q(q)})")
        return " * ".join(out)
    if isinstance(e, Prod):
        return " * ".join(_wrap(t) for t in e.terms)
    if isinstance(e, Pow):
        return f"{_wrap(e.base, True)}^({format_q(e.q)})"
    name = {Min: "min", Max: "max", Med: "med"}[type(e)]
    return f"{name}(" + ", ".join(format_expr(a) for a in e.args) + ")"


def _wrap(e, for_pow=False):
    s = format_expr(e)
    if isinstance(e, (Min, Max, Med)):
        return s
    if isinstance(e, Mono) and len(e.exps) <= 1 and not (for_pow and e.exps and e.exps[0][1] != 1):
        return s
    return f"({s})"


class _Parser:
    tok = re.compile(r"\s*(\d+/\d+|\d+|[A-Za-z_]\w*|\^|\*|/|\(|\)|,|-)")

    def __init__(self, s):
        self.toks = []
        pos = 0
        s = s.strip()
        while pos < len(s):
            m = self.tok.match(s, pos)
            if not m:
                raise ValueError(f"bad expression near {s[pos:]!r}")
            self.toks.append(m.group(1))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, t=None):
        x = self.peek()
        if t is not None and x != t:
            raise ValueError(f"expected {t!r}, got {x!r}")
        self.i += 1
        return x

    def expr(self):
        e = self.factor()
        while self.peek() in ("*", "/"):
            op = self.take()
            f = self.factor()
            e = e * f if op == "*" else e / f
        return e

    def factor(self):
        a = self.atom()
        if self.peek() == "^":
            self.take()
            a = a ** self.number()
        return a

    def number(self):
        if self.peek() == "(":
            self.take()
            q = self.number()
            self.take(")")
            return q
        sign = 1
        if self.peek() == "-":
            self.take()
            sign = -1
        return sign * Q(self.take())

    def atom(self):
        t = self.take()
        if t == "(":
            e = self.expr()
            self.take(")")
            return e
        if t == "1":
            return ONE
        if t in ("min", "max", "med", "bracket") and self.peek() == "(":
            self.take("(")
            args = [self.expr()]
            while self.peek() == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if t == "min":
                return emin(*args)
            if t == "max":
                return emax(*args)
            if t == "bracket":
                return bracket(args[0])
            return Med(tuple(args))
        if t is None or not re.match(r"[A-Za-z_]", t):
            raise ValueError(f"unexpected token {t!r}")
        return var(t)


def parse_expr(s: str) -> Expr:
    p = _Parser(s)
    e = p.expr()
    if p.peek() is not None:
        raise ValueError(f"trailing input {p.peek()!r}")
    return e


def format_problem(p: DyadicSumProblem) -> str:
    lines = []
    if p.label:
        lines.append(f"# {p.label}")
    rd = p.role
    for v in p.variables:
        lines.append(f"var {v} {rd[v]}")
    for c in p.constraints:
        lines.append(f"constraint {format_constraint(c)}")
    lines.append(f"objective {format_expr(p.objective)}")
    return "\n".join(lines) + "\n"


def parse_problem(text: str) -> DyadicSumProblem:
    roles, cons, obj, label = {}, [], None, ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not label:
                label = line[1:].strip()
            continue
        head, _, rest = line.partition(" ")
        if head == "var":
            parts = rest.split()
            if len(parts) != 2 or parts[1] not in ("sum", "sup"):
                raise ValueError(f"bad variable line: {line!r}")
            roles[parts[0]] = parts[1]
        elif head == "constraint":
            cons.append(parse_constraint(rest))
        elif head == "objective":
            obj = parse_expr(rest)
        else:
            raise ValueError(f"unknown line: {line!r}")
    if obj is None:
        raise ValueError("missing objective")
    return DyadicSumProblem.build(roles, cons, obj, label)


def eval_log_array(e: Expr, cols: Mapping[str, "np.ndarray"]):
    """Vectorized float version of ``eval_log``."""
    import numpy as np
    if isinstance(e, Mono):
        n = len(next(iter(cols.values())))
        out = np.zeros(n)
        for v, q in e.exps:
            out = out + float(q) * cols[v]
        return out
    if isinstance(e, Prod):
        return sum(eval_log_array(t, cols) for t in e.terms)
    if isinstance(e, Pow):
        return float(e.q) * eval_log_array(e.base, cols)
    vals = np.stack([eval_log_array(a, cols) for a in e.args])
    if isinstance(e, Min):
        return vals.min(axis=0)
    if isinstance(e, Max):
        return vals.max(axis=0)
    return np.sort(vals, axis=0)[1]


def lattice_points(p: DyadicSumProblem, cap: int, limit: int = 5_000_000):
    """Integer log-points of the region inside [-cap, cap]^n, as a (P, n) array.

    Variables are fixed one at a time; each constraint bounds the next
    variable given the fixed prefix and the box for the rest.
    """
    import numpy as np
    vs = list(p.variables)
    n = len(vs)
    rows = []
    for c in p.constraints:
        a = np.zeros(n)
        for v, q in c.coeffs:
            a[vs.index(v)] = float(q)
        rows.append((a, float(c.rhs), c.op))
    pts = np.zeros((1, 0))
    tol = 1e-9
    for j in range(n):
        lo = np.full(len(pts), -float(cap))
        hi = np.full(len(pts), float(cap))
        for a, b, op in rows:
            if a[j] == 0:
                continue
            pre = pts @ a[:j] if j else np.zeros(len(pts))
            rest = a[j + 1:]
            rmin = -cap * np.abs(rest).sum()
            rmax = cap * np.abs(rest).sum()
            # a_j x_j <= b - pre - rmin
            up = (b - pre - rmin) / a[j]
            if a[j] > 0:
                hi = np.minimum(hi, np.floor(up + tol))
            else:
                lo = np.maximum(lo, np.ceil(up - tol))
            if op == "=":
                dn = (b - pre - rmax) / a[j]
                if a[j] > 0:
                    lo = np.maximum(lo, np.ceil(dn - tol))
                else:
                    hi = np.minimum(hi, np.floor(dn + tol))
        cnt = np.maximum(hi - lo + 1, 0).astype(np.int64)
        total = int(cnt.sum())
        if total > limit:
            raise ValueError(f"too many lattice points ({total}); lower the cap")
        rep = np.repeat(np.arange(len(pts)), cnt)
        start = np.repeat(lo, cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        pts = np.column_stack([pts[rep], start + offs]) if total else np.zeros((0, j + 1))
    ok = np.ones(len(pts), dtype=bool)
    for a, b, op in rows:
        lhs = pts @ a
        ok &= (lhs <= b + tol) if op == "<=" else (np.abs(lhs - b) <= tol)
    return pts[ok]


def brute_force_sum(p: DyadicSumProblem, cap: int) -> float:
    """Direct dyadic summation over integer log-points with |x| <= cap.

    SUP variables are maximized over, SUM variables summed.
    """
    import numpy as np
    vs = list(p.variables)
    rd = p.role
    pts = lattice_points(p, cap)
    if not len(pts):
        return 0.0
    vals = np.exp2(eval_log_array(p.objective, {v: pts[:, i] for i, v in enumerate(vs)}))
    sup = [i for i, v in enumerate(vs) if rd[v] == "sup"]
    if not sup:
        return float(vals.sum())
    _, inv = np.unique(pts[:, sup], axis=0, return_inverse=True)
    return float(np.bincount(inv.reshape(-1), weights=vals).max())


def growth_profile(p: DyadicSumProblem, caps: Sequence[int] = (10, 20)) -> list[float]:
    return [brute_force_sum(p, c) for c in caps]


def partial_sum_check(p: DyadicSumProblem, verdict: Verdict, power=1) -> tuple[bool, list]:
    """Cap-growth oracle: compare direct partial sums at caps 5, 10 and 20.

    ``power`` raises the objective to a positive power first. Verdicts only
    depend on the sign of the growth along rays, so this keeps them while
    widening margins that the caps cannot otherwise resolve.
    """
    q = p if power == 1 else p.with_objective(p.objective ** Q(power))
    s5, s10, s20 = (brute_force_sum(q, c) for c in (5, 10, 20))
    if verdict == Verdict.Converges:
        ok = abs(s20 - s10) <= 0.1 * max(s10, 1e-300)
    elif verdict == Verdict.LogDivergent:
        ok = s20 - s10 > 0 and s10 - s5 > 0 and s20 < 2.0 ** 10 * s10
    else:
        ok = s20 > 8 * s10
    return bool(ok), [s5, s10, s20]
