"""Lower and upper bounds for multiplier norms and the algebra that moves them.

Lower bounds come from explicit test functions (a Rayleigh quotient is always
a valid lower bound). The block ascent in ``alt_max`` improves one function at
a time: with the others frozen, the best choice is the conjugate of the
partial integral. Upper bounds come from freezing one variable and applying
Cauchy-Schwarz on each section.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lattice import (
    GridFunction, GroupMismatch, GroupSpec, Multiplier, SeparableMultiplier,
    TupleMultiplier, gamma_integrate, l2_norm,
)


@dataclass(frozen=True)
class AltMaxConfig:
    restarts: int = 8
    iterations: int = 50
    tol: float = 1e-6
    seed: int = 0
    # one extra start concentrated on the section where the Cauchy-Schwarz bound peaks
    section_seed: bool = True

    def __post_init__(self):
        if self.restarts < 1 or self.iterations < 1 or not self.tol > 0:
            raise ValueError("restarts, iterations must be >= 1 and tol > 0")


@dataclass
class NormEstimate:
    lower: float
    upper: float = math.inf
    witness: list | None = field(default=None, repr=False)
    lower_method: str = "alt_max"
    upper_method: str = "none"
    zero: bool = False
    history: list = field(default_factory=list, repr=False)

    def to_record(self) -> dict:
        return {"lower": self.lower, "upper": self.upper,
                "lower_method": self.lower_method, "upper_method": self.upper_method}


def _norms(m: Multiplier, arrs) -> list[float]:
    mu = m.measure
    return [math.sqrt(float(np.sum(np.abs(a) ** 2)) * mu) for a in arrs]


def rayleigh_arrays(m: Multiplier, arrs: Sequence[np.ndarray]) -> float:
    ns = _norms(m, arrs)
    if min(ns) == 0:
        raise ValueError("rayleigh quotient needs nonzero functions")
    return abs(m.form(arrs)) / math.prod(ns)


def rayleigh(m: Multiplier, fs: Sequence[GridFunction]) -> float:
    """|integral| / product of L2 norms; always a lower bound for the norm."""
    ns = [l2_norm(f) for f in fs]
    if min(ns) == 0:
        raise ValueError("rayleigh quotient needs nonzero functions")
    return abs(gamma_integrate(m, fs)) / math.prod(ns)


def _normalize(m, a):
    n = math.sqrt(float(np.sum(np.abs(a) ** 2)) * m.measure)
    return a / n if n > 0 else a


def ascend(m: Multiplier, start: Sequence[np.ndarray], iterations: int, tol: float,
           first: int = 0):
    """Block ascent from a starting tuple. Returns (value, arrays, history).

    Slots are updated cyclically beginning with ``first``.
    """
    fs = [_normalize(m, np.asarray(a, dtype=np.complex128)) for a in start]
    if any(not np.any(a) for a in fs):
        return 0.0, fs, []
    history = []
    prev = -1.0
    val = 0.0
    for _ in range(iterations):
        for jj in range(m.k):
            j = (first + jj) % m.k
            g = m.partial(j, fs)
            n = math.sqrt(float(np.sum(np.abs(g) ** 2)) * m.measure)
            if n == 0:
                return 0.0, fs, history
            fs[j] = np.conj(g) / n
            # with the other slots at unit norm the new value is |g|
            val = n
            history.append(val)
        if val - prev <= tol * val:
            break
        prev = val
    return val, fs, history


def _gaussian_start(m: Multiplier, rng: np.random.Generator):
    return [rng.standard_normal(m.slot_size(j)) + 1j * rng.standard_normal(m.slot_size(j))
            for j in range(m.k)]


def _section_start(m: Multiplier, rng: np.random.Generator):
    best_j, best_eta, best = 0, 0, -1.0
    for j in range(m.k):
        s = m.section_sums(j)
        if s.size and s.max() > best:
            best_j, best_eta, best = j, int(np.argmax(s)), float(s.max())
    start = _gaussian_start(m, rng)
    delta = np.zeros(m.slot_size(best_j), dtype=np.complex128)
    delta[best_eta] = 1.0
    start[best_j] = delta
    return start, (best_j + 1) % m.k


def alt_max(m: Multiplier, cfg: AltMaxConfig = AltMaxConfig(), seeds=None) -> NormEstimate:
    """Best Rayleigh value found by block ascent over several starts.

    ``seeds`` is an optional list of starting tuples (GridFunction lists or
    slot arrays) run in addition to the random restarts.
    """
    if m.k < 2:
        raise ValueError("need k >= 2")
    ss = np.random.SeedSequence(cfg.seed)
    starts = []
    for child in ss.spawn(cfg.restarts):
        starts.append(("random", _gaussian_start(m, np.random.default_rng(child)), 0))
    if cfg.section_seed:
        st, first = _section_start(m, np.random.default_rng([cfg.seed, 1 << 30]))
        starts.append(("section", st, first))
    for s in seeds or []:
        arrs = [m.restrict(j, f) if isinstance(f, GridFunction) else np.asarray(f)
                for j, f in enumerate(s)]
        starts.append(("seed", arrs, 0))
    best_val, best_fs, best_hist, best_tag = -1.0, None, [], ""
    for tag, st, first in starts:
        val, fs, hist = ascend(m, st, cfg.iterations, cfg.tol, first)
        if val > best_val:
            best_val, best_fs, best_hist, best_tag = val, fs, hist, tag
    if best_val <= 0 or best_fs is None:
        return NormEstimate(0.0, witness=None, zero=True, lower_method="alt_max")
    lower = rayleigh_arrays(m, best_fs)
    witness = [m.embed(j, a) for j, a in enumerate(best_fs)]
    return NormEstimate(lower, witness=witness, lower_method=f"alt_max[{best_tag}]",
                        history=best_hist)


def cs_upper_exact(m: Multiplier, j: int) -> tuple[Fraction, float]:
    """(measure factor, max raw section sum); the bound is sqrt(factor * sum)."""
    if not 0 <= j < m.k:
        raise ValueError("slot index out of range")
    s = m.section_sums(j)
    top = float(s.max()) if s.size else 0.0
    return Fraction(m.group.measure) ** (m.k - 2), top


def cs_upper(m: Multiplier, j: int) -> float:
    """Cauchy-Schwarz bound from freezing slot j (0-based)."""
    fac, top = cs_upper_exact(m, j)
    return math.sqrt(float(fac) * top)


def cs_upper_min(m: Multiplier) -> float:
    return min(cs_upper(m, j) for j in range(m.k))


def estimate(m: Multiplier, cfg: AltMaxConfig = AltMaxConfig(), seeds=None) -> NormEstimate:
    est = alt_max(m, cfg, seeds)
    est.upper = cs_upper_min(m)
    est.upper_method = "cauchy_schwarz"
    return est


def k2_exact(m: Multiplier) -> float:
    """For k = 2 the norm is the sup of |m| on the hyperplane."""
    if m.k != 2:
        raise ValueError("k2_exact needs k = 2")
    if isinstance(m, SeparableMultiplier):
        m = m.to_tuples()
    if not isinstance(m, TupleMultiplier):
        raise TypeError("unsupported multiplier type")
    return float(np.abs(m.vals).max()) if m.nnz else 0.0


# transforms


def _as_index_vectors(group: GroupSpec, shift):
    """Accept per-slot shifts as integer index vectors of length dim."""
    return [np.atleast_1d(np.asarray(s, dtype=np.int64)) for s in shift]


def _shift_flat(group: GroupSpec, flat, vec):
    idx = np.unravel_index(flat, group.shape)
    out, ok = [], np.ones(flat.shape, dtype=bool)
    for a, (M, cyc, _) in enumerate(group._axis_sizes()):
        i = idx[a] + (vec[a] if a < len(vec) else 0)
        if cyc:
            out.append(np.mod(i, M))
        else:
            ok &= (i >= 0) & (i < M)
            out.append(np.clip(i, 0, M - 1))
    return np.ravel_multi_index(tuple(out), group.shape), ok


def translate(m: TupleMultiplier, shift) -> TupleMultiplier:
    """m'(xi) = m(xi - shift); ``shift`` is one index vector per slot summing to 0."""
    vecs = _as_index_vectors(m.group, shift)
    if len(vecs) != m.k:
        raise ValueError("need one shift per slot")
    total = sum(vecs)
    for a, (M, cyc, _) in enumerate(m.group._axis_sizes()):
        t = int(total[a]) if a < len(total) else 0
        if (t % M if cyc else t) != 0:
            raise ValueError("translation vector is off the hyperplane")
    new, ok = [], np.ones(m.nnz, dtype=bool)
    for j in range(m.k):
        f, okj = _shift_flat(m.group, m.idx[j], vecs[j])
        new.append(f)
        ok &= okj
    if not ok.all():
        raise ValueError("translation moves support outside the truncated grid")
    return TupleMultiplier(m.group, np.stack(new), m.vals)


def permute(m: TupleMultiplier, sigma: Sequence[int]) -> TupleMultiplier:
    """Old slot j becomes new slot sigma[j]."""
    sigma = list(sigma)
    if sorted(sigma) != list(range(m.k)):
        raise ValueError("not a permutation")
    inv = [0] * m.k
    for j, s in enumerate(sigma):
        inv[s] = j
    return m.permuted(inv)


def dilate(m: TupleMultiplier, lam) -> TupleMultiplier:
    """Grid automorphism xi -> lam * xi.

    On cycles lam must be an integer coprime to M. On real and torus grids the
    table is kept and the spacing is multiplied by lam (a paired respacing).
    """
    g = m.group
    if g.kind == "cycle":
        if Fraction(lam).denominator != 1 or math.gcd(int(lam), g.points) != 1:
            raise ValueError("dilation is not an automorphism of this cycle")
        lam = int(lam)
        new = []
        for j in range(m.k):
            idx = np.unravel_index(m.idx[j], g.shape)
            new.append(np.ravel_multi_index(tuple(np.mod(lam * i, g.points) for i in idx), g.shape))
        return TupleMultiplier(g, np.stack(new), m.vals)
    lam = Fraction(lam)
    if lam <= 0:
        raise ValueError("dilation factor must be positive")
    if g.time is not None:
        raise ValueError("dilation of space-time groups is not supported")
    g2 = GroupSpec(g.kind, g.dim, g.points, g.spacing * lam)
    return TupleMultiplier(g2, m.idx, m.vals)


def conjugate_reflect(m: TupleMultiplier, J: Sequence[int]) -> TupleMultiplier:
    """Reflect the free variables in J (0-based, excluding the last slot).

    For m = m1(xi_J) m2(xi_rest) with real factors this gives
    m1(-xi_J) m2(xi_rest), which has the same norm.
    """
    J = sorted(set(J))
    if any(j < 0 or j >= m.k - 1 for j in J):
        raise ValueError("J must index free variables 0..k-2")
    if np.any(np.imag(m.vals) != 0):
        raise ValueError("conjugate_reflect is stated for real multipliers")
    free = [m.idx[j] for j in range(m.k - 1)]
    ok = np.ones(m.nnz, dtype=bool)
    for j in J:
        free[j], okj = m.group.negate(free[j])
        ok &= okj
    last, okl = m.group.close_tuple(free)
    ok &= okl
    idx = np.stack([f[ok] for f in free] + [last[ok]])
    return TupleMultiplier(m.group, idx, m.vals[ok])


def transform(m: TupleMultiplier, kind: str, arg):
    if kind == "translate":
        return translate(m, arg)
    if kind == "permute":
        return permute(m, arg)
    if kind == "dilate":
        return dilate(m, arg)
    if kind == "conjugate_reflect":
        return conjugate_reflect(m, arg)
    raise ValueError(f"unknown transform {kind!r}")


def tensor_product(m1: TupleMultiplier, m2: TupleMultiplier) -> TupleMultiplier:
    """(m1 x m2)(xi1, xi2) = m1(xi1) m2(xi2) on the product group."""
    if m1.k != m2.k:
        raise ValueError("k mismatch")
    g1, g2 = m1.group, m2.group
    if g2.size == 1:
        c = m2.vals[0] if m2.nnz else 0
        return m1.scaled(c)
    if g1.size == 1:
        c = m1.vals[0] if m1.nnz else 0
        return m2.scaled(c)
    if (g1.kind, g1.points, g1.spacing) != (g2.kind, g2.points, g2.spacing) or g1.time or g2.time:
        raise GroupMismatch("product of unlike axes is not representable")
    g = GroupSpec(g1.kind, g1.dim + g2.dim, g1.points, g1.spacing)
    n2 = g2.size
    p = np.repeat(np.arange(m1.nnz), m2.nnz)
    q = np.tile(np.arange(m2.nnz), m1.nnz)
    idx = m1.idx[:, p] * n2 + m2.idx[:, q]
    return TupleMultiplier(g, idx, m1.vals[p] * m2.vals[q])


def compose_product(m1: TupleMultiplier, m2: TupleMultiplier) -> TupleMultiplier:
    """Multiplier m1(xi_1..xi_k1) m2(xi_{k1+1}..xi_{k1+k2}) on the joint hyperplane.

    m1 and m2 are given as [k1+1] and [k2+1] multipliers (the last slot is the
    dependent variable); the result has k1 + k2 slots.
    """
    if m1.group != m2.group:
        raise GroupMismatch("groups differ")
    g = m1.group
    k1, k2 = m1.k - 1, m2.k - 1
    if k1 + k2 < 2:
        raise ValueError("composition needs at least two slots")
    # the joint constraint couples the two dependent slots: last2 = -last1
    neg1, ok1 = g.negate(m1.idx[-1])
    order = np.argsort(m2.idx[-1], kind="stable")
    keys = m2.idx[-1][order]
    lo = np.searchsorted(keys, neg1, "left")
    hi = np.searchsorted(keys, neg1, "right")
    cnt = np.where(ok1, hi - lo, 0)
    p = np.repeat(np.arange(m1.nnz), cnt)
    starts = np.repeat(lo, cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    q = order[starts + offs]
    idx = np.concatenate([m1.idx[:-1, p], m2.idx[:-1, q]])
    return TupleMultiplier(g, idx, m1.vals[p] * m2.vals[q])


def reflect_conj_full(m: TupleMultiplier) -> TupleMultiplier:
    """m'(xi) = conj(m(-xi)) as a function of the free variables."""
    ok = np.ones(m.nnz, dtype=bool)
    new = []
    for j in range(m.k):
        f, okj = m.group.negate(m.idx[j])
        new.append(f)
        ok &= okj
    return TupleMultiplier(m.group, np.stack(new)[:, ok], np.conj(m.vals[ok]))


def tt_star(m: TupleMultiplier) -> TupleMultiplier:
    """2k-slot multiplier m(xi_1..xi_k) conj(m(-xi_{k+1}..-xi_{2k})) for real m.

    ``m`` is passed as a [k+1] multiplier whose first k slots are the free
    variables.
    """
    if np.any(np.imag(m.vals) != 0):
        raise ValueError("the identity is stated for real multipliers")
    return compose_product(m, reflect_conj_full(m))


def supports(m: TupleMultiplier) -> list[np.ndarray]:
    """Boolean support projection per slot."""
    out = []
    for j in range(m.k):
        s = np.zeros(m.slot_size(j), dtype=bool)
        s[m.idx[j]] = True
        out.append(s)
    return out


def _max_overlap(boxes: list[list[np.ndarray]]) -> int:
    """Max over points of the number of product boxes containing the point."""
    if not boxes:
        return 0
    r = len(boxes[0])
    if r == 1:
        return int(np.sum([b[0].astype(np.int64) for b in boxes], axis=0).max())
    if r == 2:
        acc = None
        for b in boxes:
            o = np.outer(b[0].astype(np.int64), b[1].astype(np.int64))
            acc = o if acc is None else acc + o
        return int(acc.max())
    raise NotImplementedError("overlap counting is implemented for |J| <= 2")


def schur_sum_bound(parts, A1: int, A2: int, J1: Sequence[int], J2: Sequence[int]) -> float:
    """Orthogonality bound for a sum of pieces with controlled support overlap.

    ``parts`` holds multipliers or (multiplier, boxes) pairs, where boxes maps
    each slot in J1 and J2 to a boolean mask containing that piece's support.
    """
    J1, J2 = list(J1), list(J2)
    if not J1 or not J2 or set(J1) & set(J2):
        raise ValueError("J1, J2 must be disjoint and nonempty")
    mults, boxes = [], []
    for part in parts:
        if isinstance(part, tuple):
            mm, bx = part
        else:
            mm, bx = part, None
        sup = supports(mm)
        if bx is None:
            bx = {j: sup[j] for j in J1 + J2}
        for j in J1 + J2:
            if np.any(sup[j] & ~np.asarray(bx[j], dtype=bool)):
                raise ValueError("declared box does not contain the support")
        mults.append(mm)
        boxes.append(bx)
    for A, J in ((A1, J1), (A2, J2)):
        ov = _max_overlap([[np.asarray(b[j], dtype=bool) for j in J] for b in boxes])
        if ov > A:
            raise ValueError(f"overlap declaration false: found {ov} > {A}")
    best = max(cs_upper_min(mm) for mm in mults)
    return math.sqrt(A1 * A2) * best


def sum_multipliers(parts: Sequence[TupleMultiplier]) -> TupleMultiplier:
    g = parts[0].group
    idx = np.concatenate([p.idx for p in parts], axis=1)
    vals = np.concatenate([p.vals for p in parts])
    # merge duplicate tuples
    key = np.ravel_multi_index(tuple(idx), (g.size,) * idx.shape[0])
    uk, inv = np.unique(key, return_inverse=True)
    merged = np.zeros(uk.size, dtype=np.complex128)
    np.add.at(merged, inv, vals)
    return TupleMultiplier(g, np.stack(np.unravel_index(uk, (g.size,) * idx.shape[0])), merged)
