"""Dyadic block bounds for KdV, wave and Schrodinger interactions.

A block fixes the frequency sizes N_j, the modulation sizes L_j (distance of
(xi_j, tau_j) from the j-th dispersion surface) and the resonance size H.
Each family has a closed-form bound, chosen by case analysis of the sizes,
plus a numerical model of the block as a sparse 0/1 multiplier on a
space-time grid and explicit test-function triples.

Numeric comparison conventions (dyadic sizes):
  a ~ b   ratio below 4
  a << b  b >= 4a
  a <~ b  a < 4b
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import dyadic as dy
from .dyadic import ONE, Expr, bracket, emax, emed, emin, var
from .lattice import GridFunction, GroupSpec, TimeAxis, TupleMultiplier, real_grid

Q = Fraction

FAMILIES = ("kdv-r", "kdv-t", "wave", "schro-ppp", "schro-ppm")
SLACK = 4
DEFAULT_EPS = Q(1, 20)

# |h(xi)| / scale is the resonance size compared with H
RESONANCE_SCALE = {"kdv-r": 3, "kdv-t": 3, "wave": 1, "schro-ppp": 2, "schro-ppm": 2}


def sim(a, b) -> bool:
    a, b = Q(a), Q(b)
    return max(a, b) < SLACK * min(a, b)


def ll(a, b) -> bool:
    return Q(b) >= SLACK * Q(a)


def lesssim(a, b) -> bool:
    return Q(a) < SLACK * Q(b)


def _is_dyadic(x) -> bool:
    x = Q(x)
    n, d = x.numerator, x.denominator
    return n > 0 and n & (n - 1) == 0 and d & (d - 1) == 0


def _log2(x) -> int:
    x = Q(x)
    return x.numerator.bit_length() - x.denominator.bit_length()


@dataclass(frozen=True)
class BlockParams:
    N: tuple
    L: tuple
    H: Fraction
    signs: tuple = (1, 1, -1)
    dim: int = 1
    setting: str = "nonperiodic"
    eps: Fraction = DEFAULT_EPS

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(Q(x) for x in self.N))
        object.__setattr__(self, "L", tuple(Q(x) for x in self.L))
        object.__setattr__(self, "H", Q(self.H))
        object.__setattr__(self, "eps", Q(self.eps))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.N) != 3 or len(self.L) != 3 or len(self.signs) != 3:
            raise ValueError("blocks have exactly three frequencies, modulations and signs")
        for x in self.N + (self.H,):
            if not _is_dyadic(x):
                raise ValueError(f"{x} is not a power of two")
        for x in self.L:
            if not _is_dyadic(x) or x < 1:
                raise ValueError(f"modulation {x} must be a power of two >= 1")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs are +1 or -1")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.setting not in ("nonperiodic", "periodic"):
            raise ValueError("setting is nonperiodic or periodic")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def permuted(self, perm: Sequence[int]) -> "BlockParams":
        """New index i carries old index perm[i]."""
        return replace(self, N=tuple(self.N[p] for p in perm), L=tuple(self.L[p] for p in perm),
                       signs=tuple(self.signs[p] for p in perm))

    def env(self) -> dict:
        """log2 of every housed symbol, including order statistics."""
        ns = sorted(self.N, reverse=True)
        ls = sorted(self.L, reverse=True)
        out = {f"N{i + 1}": _log2(x) for i, x in enumerate(self.N)}
        out.update({f"L{i + 1}": _log2(x) for i, x in enumerate(self.L)})
        out["H"] = _log2(self.H)
        for name, vals in (("N", ns), ("L", ls)):
            out[name + "max"], out[name + "med"], out[name + "min"] = map(_log2, vals)
        return {k: Q(v) for k, v in out.items()}

    def to_record(self) -> dict:
        return {"N": [str(x) for x in self.N], "L": [str(x) for x in self.L], "H": str(self.H),
                "signs": list(self.signs), "dim": self.dim, "setting": self.setting,
                "eps": str(self.eps)}


@dataclass
class BlockBound:
    value: float
    case_label: str
    symbolic: Expr | None = None
    frame: tuple = (0, 1, 2)  # index i of the formula refers to input index frame[i]
    time_reversed: bool = False

    @property
    def vanishes(self) -> bool:
        return self.case_label.startswith("vanishes")

    def to_record(self) -> dict:
        return {"case_label": self.case_label, "value": self.value,
                "symbolic": None if self.symbolic is None else dy.format_expr(self.symbolic),
                "frame": list(self.frame), "time_reversed": self.time_reversed}


# symbols

Nmax, Nmed, Nmin = var("Nmax"), var("Nmed"), var("Nmin")
Lmax, Lmed, Lmin = var("Lmax"), var("Lmed"), var("Lmin")
N1, N2, N3 = var("N1"), var("N2"), var("N3")
L1, L2, L3 = var("L1"), var("L2"), var("L3")
Hs = var("H")
half = Q(1, 2)


def zbracket(e: Expr, periodic: bool) -> Expr:
    """<x>_Z: |x| on the line, max(1, |x|) on the integers."""
    return bracket(e) if periodic else e


def kdv_formula(case: str, periodic: bool = False) -> Expr:
    if case == "kdv-excep":
        inner = Nmax ** Q(-1, 4) * Lmed ** Q(1, 4)
    elif case == "kdv-weird":
        inner = Nmax ** -1 * emin(Hs, Nmax / Nmin * Lmed) ** half
    elif case == "kdv-standard":
        inner = Nmax ** -1 * emin(Hs, Lmed) ** half
    else:
        raise ValueError(f"unknown KdV case {case}")
    return Lmin ** half * zbracket(inner, periodic)


def wave_formula(case: str, d: int) -> Expr:
    """In the normalized (+,+,-) frame; index 2 is the low frequency off the (++) case."""
    d = Q(d)
    if case == "wpp":
        return Lmin ** half * emin(Lmed, N3) ** half * N3 ** ((d - 1) / 2)
    lorentz = (Hs / N2) ** ((d - 3) / 4)
    if case == "w-standard":
        return lorentz * Lmin ** half * emin(Hs, Lmed) ** half * N2 ** ((d - 1) / 2)
    if case == "w-pm":
        return lorentz * Lmin ** half * emin(Hs, N1 / N2 * Lmed) ** half * N2 ** ((d - 1) / 2)
    raise ValueError(f"unknown wave case {case}")


def schro_formula(case: str, d: int, eps=Q(0)) -> Expr:
    d = Q(d)
    base = Lmin ** half * Nmax ** -half * Nmin ** ((d - 1) / 2)
    if case in ("sppp-standard", "sppm-pp", "sppm-1d-standard"):
        return base * emin(Nmax * Nmin, Lmed) ** half
    if case in ("sppp-excep", "sppm-1d-excep"):
        return Lmin ** half * Lmed ** Q(1, 4)
    if case == "sppm-1d-weak":
        return Lmin ** half * Nmin ** -half * Lmed ** half
    if case == "sppm-excep":
        return base * emin(Hs, Hs / Nmin ** 2 * Lmed) ** half
    if case == "sppm-est":
        e = Q(0) if d == 2 else Q(eps)
        return base * emin(Hs, Lmed) ** half * emin(ONE, Hs / Nmin ** 2) ** (half - e)
    raise ValueError(f"unknown Schrodinger case {case}")


def _evaluate(expr: Expr, p: BlockParams) -> float:
    return 2.0 ** float(dy.eval_log(expr, p.env()))


def _common_vanishing(p: BlockParams) -> str | None:
    ns = sorted(p.N, reverse=True)
    ls = sorted(p.L, reverse=True)
    if not sim(ns[0], ns[1]):
        return "vanishes (frequency sizes: N_max not ~ N_med)"
    if not sim(ls[0], max(p.H, ls[1])):
        return "vanishes (modulation sizes: L_max not ~ max(H, L_med))"
    return None


def _done(p, label, expr, frame=(0, 1, 2), reverse=False) -> BlockBound:
    q = p.permuted(frame)
    return BlockBound(_evaluate(expr, q), label, expr, tuple(frame), reverse)


def _zero(label, frame=(0, 1, 2), reverse=False) -> BlockBound:
    return BlockBound(0.0, label, None, tuple(frame), reverse)


def kdv_block(p: BlockParams) -> BlockBound:
    if p.dim != 1:
        raise ValueError("KdV blocks are one-dimensional")
    periodic = p.setting == "periodic"
    v = _common_vanishing(p)
    if v:
        return _zero(v)
    if not sim(p.H, p.N[0] * p.N[1] * p.N[2]):
        return _zero("vanishes (resonance: H not ~ N1 N2 N3)")
    ns = sorted(p.N)
    lmax = max(p.L)
    if sim(ns[2], ns[0]) and sim(lmax, p.H):
        return _done(p, "kdv-excep", kdv_formula("kdv-excep", periodic))
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        if (sim(p.N[j], p.N[k]) and ll(p.N[i], min(p.N[j], p.N[k])) and sim(p.H, p.L[i])
                and lesssim(p.L[j], p.L[i]) and lesssim(p.L[k], p.L[i])):
            return _done(p, "kdv-weird", kdv_formula("kdv-weird", periodic))
    return _done(p, "kdv-standard", kdv_formula("kdv-standard", periodic))


def wave_frame(signs) -> tuple[tuple, bool]:
    """Permutation to (+,+,-) order and whether time reversal is needed."""
    if len(set(signs)) == 1:
        raise ValueError("all signs equal")
    odd = next(i for i in range(3) if signs.count(signs[i]) == 1)
    rest = [i for i in range(3) if i != odd]
    return (rest[0], rest[1], odd), signs[odd] == 1


def wave_block(p: BlockParams) -> BlockBound:
    if p.dim < 2:
        raise ValueError("wave blocks need d >= 2")
    if len(set(p.signs)) == 1:
        return _zero("vanishes (all signs equal)")
    frame, rev = wave_frame(p.signs)
    q = p.permuted(frame)
    v = _common_vanishing(q)
    if v:
        return _zero(v, frame, rev)
    n1, n2, n3 = q.N
    if not lesssim(q.H, min(n1, n2)):
        return _zero("vanishes (resonance: H not <~ min(N1, N2))", frame, rev)
    d = p.dim
    if sim(n1, n2) and ll(n3, min(n1, n2)):
        # N1 ~ N2 here; the larger one keeps the rule symmetric in 1 <-> 2
        top = max(n1, n2)
        if not sim(q.H, top):
            return _zero("vanishes (high-high: H not ~ N1)", frame, rev)
        if ll(q.L[2], top) and not (sim(q.L[0], top) and sim(q.L[1], top)):
            return _zero("vanishes (high-high: L3 << N1 but L1, L2 not ~ N1)", frame, rev)
        return _done(p, "wpp", wave_formula("wpp", d), frame, rev)
    if n1 < n2:
        # roles of 1 and 2 reversed
        frame = (frame[1], frame[0], frame[2])
        q = p.permuted(frame)
    if q.L[1] >= max(q.L):
        return _done(p, "w-pm", wave_formula("w-pm", d), frame, rev)
    return _done(p, "w-standard", wave_formula("w-standard", d), frame, rev)


def schro_ppp_block(p: BlockParams) -> BlockBound:
    v = _common_vanishing(p)
    if v:
        return _zero(v)
    nmax, nmin = max(p.N), min(p.N)
    if not sim(p.H, nmax ** 2):
        return _zero("vanishes (resonance: H not ~ N_max^2)")
    if p.dim == 1 and sim(nmax, nmin) and sim(max(p.L), p.H):
        return _done(p, "sppp-excep", schro_formula("sppp-excep", 1))
    return _done(p, "sppp-standard", schro_formula("sppp-standard", p.dim))


def schro_ppm_block(p: BlockParams) -> BlockBound:
    """(+,+,-) Schrodinger block; index 3 carries the conjugated wave."""
    v = _common_vanishing(p)
    if v:
        return _zero(v)
    n1, n2, n3 = p.N
    l1, l2, l3 = p.L
    H = p.H
    nmin = min(p.N)
    lmax = max(p.L)
    if not lesssim(H, n1 * n2):
        return _zero("vanishes (resonance: H not <~ N1 N2)")
    if p.dim == 1:
        if not sim(H, n1 * n2):
            return _zero("vanishes (resonance: H not ~ N1 N2)")
        if ((sim(n1, nmin) and sim(l1, lmax) and sim(lmax, H))
                or (sim(n2, nmin) and sim(l2, lmax) and sim(lmax, H))):
            return _done(p, "sppm-1d-weak", schro_formula("sppm-1d-weak", 1))
        if sim(max(p.N), nmin) and sim(lmax, H):
            return _done(p, "sppm-1d-excep", schro_formula("sppm-1d-excep", 1))
        return _done(p, "sppm-1d-standard", schro_formula("sppm-1d-standard", 1))
    if sim(n1, n2) and ll(n3, min(n1, n2)):
        if not sim(H, max(n1, n2) ** 2):
            return _zero("vanishes ((++) case: H not ~ N1^2)")
        return _done(p, "sppm-pp", schro_formula("sppm-pp", p.dim))
    for big, small in ((0, 1), (1, 0)):
        nb, ns_ = p.N[big], p.N[small]
        lb, ls_ = p.L[big], p.L[small]
        if (sim(nb, n3) and ll(ns_, min(nb, n3)) and sim(H, ls_) and ll(lb, ls_) and ll(l3, ls_)
                and ll(ns_ ** 2, ls_)):
            return _done(p, "sppm-excep", schro_formula("sppm-excep", p.dim))
    return _done(p, "sppm-est", schro_formula("sppm-est", p.dim, p.eps))


def block_bound(family: str, p: BlockParams) -> BlockBound:
    if family in ("kdv-r", "kdv-t"):
        want = "periodic" if family == "kdv-t" else "nonperiodic"
        if p.setting != want:
            p = replace(p, setting=want)
        return kdv_block(p)
    if family == "wave":
        return wave_block(p)
    if family == "schro-ppp":
        return schro_ppp_block(p)
    if family == "schro-ppm":
        return schro_ppm_block(p)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def rotate_bound(R, r, theta, d: int, eps=DEFAULT_EPS) -> float:
    """Bound for nearly orthogonal interactions |xi1|~R, |xi2|~r, angle pi/2 + O(theta)."""
    R, r, theta, eps = float(R), float(r), float(theta), float(eps)
    if d < 2:
        raise ValueError("needs d >= 2")
    if not (R >= r > 0):
        raise ValueError("needs R >= r > 0")
    if not (0 < theta <= 2):
        raise ValueError("needs 0 < theta <~ 1")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if d == 2:
        eps = 0.0
    return r ** (d / 2) * theta ** 0.5 * min(1.0, R * theta / r) ** (0.5 - eps)


def transversality_bound(L1, L2, theta, proj_measure, E_measures) -> float:
    """min of the transverse bound and the crude bound for two thickened surfaces."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    proj = min(proj_measure) if isinstance(proj_measure, (tuple, list)) else proj_measure
    E = min(E_measures) if isinstance(E_measures, (tuple, list)) else E_measures
    main = math.sqrt(L1 * L2 / theta * proj)
    crude = math.sqrt(min(L1, L2) * E)
    return min(main, crude)


# numerical block multipliers


def dispersion(family: str, sign: int, xi: np.ndarray) -> np.ndarray:
    """Dispersion relation h_j on spatial coordinates (P, d)."""
    if family in ("kdv-r", "kdv-t"):
        return xi[:, 0] ** 3
    r2 = np.sum(xi ** 2, axis=1)
    if family == "wave":
        return sign * np.sqrt(r2)
    return sign * r2


def family_signs(family: str, p: BlockParams) -> tuple:
    if family == "schro-ppp":
        return (1, 1, 1)
    if family == "schro-ppm":
        return (1, 1, -1)
    if family in ("kdv-r", "kdv-t"):
        return (1, 1, 1)
    return p.signs


@dataclass(frozen=True)
class BlockGrid:
    points: int
    spacing: Fraction
    time_spacing: Fraction | None = None  # default: L_min / 4

    def spatial(self, dim: int) -> GroupSpec:
        return real_grid(self.points, self.spacing, dim)


class SupportMultiplier(TupleMultiplier):
    """Tuple multiplier whose slot j only stores the points ``slot_points[j]``.

    ``idx`` holds positions into ``slot_points[j]``; functions off the listed
    points never interact with the multiplier.
    """

    def __init__(self, group: GroupSpec, slot_points: Sequence[np.ndarray], idx, vals):
        self.slot_points = [np.asarray(s, dtype=np.int64) for s in slot_points]
        super().__init__(group, idx, vals)

    def slot_size(self, j):
        return self.slot_points[j].size

    def embed(self, j, arr):
        full = np.zeros(self.group.size, dtype=np.complex128)
        full[self.slot_points[j]] = arr
        return GridFunction(self.group, full.reshape(self.group.shape))

    def restrict(self, j, f):
        return f.flat[self.slot_points[j]]

    def global_tuples(self) -> np.ndarray:
        return np.stack([self.slot_points[j][self.idx[j]] for j in range(self.k)])

    def to_tuple_multiplier(self) -> TupleMultiplier:
        return TupleMultiplier(self.group, self.global_tuples(), self.vals)


def _shell_points(group: GroupSpec, lo: float, hi: float):
    xs = group.point_coordinates().reshape(-1, group.dim)
    r = np.sqrt(np.sum(xs ** 2, axis=1))
    sel = np.nonzero((r >= lo - 1e-12) & (r < hi - 1e-12))[0]
    return sel, xs[sel]


def block_multiplier(p: BlockParams, family: str, grid: BlockGrid,
                     max_tuples: int = 20_000_000) -> SupportMultiplier:
    """0/1 indicator of the block {|xi_j|~N_j, |lambda_j|~L_j, |h|~H} on a grid.

    Shells are [x, 2x). The time axis is sized to hold every support
    point; its spacing defaults to L_min/4.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    d = p.dim
    sg = grid.spatial(d)
    h = float(grid.spacing)
    half_width = (grid.points // 2) * h
    need = 2 * float(max(p.N))
    if need > half_width + 1e-12:
        raise ValueError(f"grid too small: |xi| reaches {need}, grid half-width {half_width}")
    signs = family_signs(family, p)
    scale = RESONANCE_SCALE[family]
    ht = Q(grid.time_spacing) if grid.time_spacing is not None else Q(min(p.L)) / 4
    htf = float(ht)
    # spatial triples
    shells = [_shell_points(sg, float(n), 2 * float(n)) for n in p.N]
    a_idx, a_x = shells[0]
    b_idx, b_x = shells[1]
    c_rad = (float(p.N[2]), 2 * float(p.N[2]))
    triples = []
    A = np.repeat(np.arange(a_idx.size), b_idx.size)
    B = np.tile(np.arange(b_idx.size), a_idx.size)
    xc = -(a_x[A] + b_x[B])
    rc = np.sqrt(np.sum(xc ** 2, axis=1))
    ok = (rc >= c_rad[0] - 1e-12) & (rc < c_rad[1] - 1e-12)
    A, B, xc = A[ok], B[ok], xc[ok]
    xs = [a_x[A], b_x[B], xc]
    phis = [dispersion(family, signs[j], xs[j]) for j in range(3)]
    res = np.abs(phis[0] + phis[1] + phis[2]) / scale
    ok = (res >= float(p.H) - 1e-9) & (res < 2 * float(p.H) - 1e-9)
    xs = [x[ok] for x in xs]
    phis = [ph[ok] for ph in phis]
    # spatial flat index of the third point
    o = sg.offset
    ic = np.rint(xs[2] / h).astype(np.int64) + o
    c_flat = np.ravel_multi_index(tuple(ic.T), sg.spatial_shape) if len(ic) else np.zeros(0, np.int64)
    sp_flat = [a_idx[A[ok]], b_idx[B[ok]], c_flat]
    T = len(sp_flat[0])
    # time axis
    phimax = max((float(np.max(np.abs(ph))) for ph in phis if ph.size), default=0.0)
    tmax = phimax + 2 * float(max(p.L)) + 2 * htf
    Mt = 2 * int(math.ceil(tmax / htf)) + 3
    group = real_grid(grid.points, grid.spacing, d, time=TimeAxis(Mt, ht))
    to = group.time.offset
    if T == 0:
        return SupportMultiplier(group, [np.zeros(0, np.int64)] * 3, np.zeros((3, 0), np.int64),
                                 np.zeros(0))
    order = np.argsort(np.array([float(x) for x in p.L]), kind="stable")
    s1, s2, s3 = (int(order[0]), int(order[1]), int(order[2]))
    Ls = [float(x) for x in p.L]

    def band(j):
        # integer tau offsets (relative to the axis centre) with |lambda| in [L, 2L)
        w = int(math.ceil(Ls[j] / htf)) + 2
        base_hi = np.floor((phis[j] + Ls[j]) / htf).astype(np.int64)
        base_lo = np.ceil((phis[j] - 2 * Ls[j]) / htf).astype(np.int64)
        offs = np.arange(w + 1)
        cand = np.concatenate([base_hi[:, None] + offs[None, :], base_lo[:, None] + offs[None, :]], axis=1)
        return cand

    c1, c2 = band(s1), band(s2)
    n_cand = T * c1.shape[1] * c2.shape[1]
    if n_cand > max_tuples:
        raise ValueError(f"block too large to enumerate ({n_cand} candidates)")
    t1 = np.repeat(c1, c2.shape[1], axis=1).reshape(-1)
    t2 = np.tile(c2, (1, c1.shape[1])).reshape(-1)
    tri = np.repeat(np.arange(T), c1.shape[1] * c2.shape[1])
    t3 = -t1 - t2
    ts = {s1: t1, s2: t2, s3: t3}
    keep = np.ones(t1.size, dtype=bool)
    for j in range(3):
        lam = ts[j] * htf - phis[j][tri]
        al = np.abs(lam)
        keep &= (al >= Ls[j] - 1e-9) & (al < 2 * Ls[j] - 1e-9)
        keep &= np.abs(ts[j]) <= to
        if family == "wave":
            keep &= signs[j] * ts[j] >= 0
    tri = tri[keep]
    flats, pts, loc = [], [], []
    for j in range(3):
        tj = ts[j][keep] + to
        f = sp_flat[j][tri] * Mt + tj
        u, inv = np.unique(f, return_inverse=True)
        pts.append(u)
        loc.append(inv.reshape(-1))
    return SupportMultiplier(group, pts, np.stack(loc), np.ones(loc[0].size))


def support_count(m: SupportMultiplier) -> int:
    return m.nnz


# test functions


def _slot_xi(m: SupportMultiplier, j: int) -> np.ndarray:
    return m.group.coordinates(m.slot_points[j])


def extremizer(p: BlockParams, family: str, case_label: str, grid) -> list[GridFunction]:
    """Test-function triple for the named case, as grid functions.

    ``grid`` is a BlockGrid or an already built block multiplier.
    """
    actual = block_bound(family, p).case_label
    if actual != case_label:
        raise ValueError(f"parameters are in case {actual!r}, not {case_label!r}")
    m = grid if isinstance(grid, SupportMultiplier) else block_multiplier(p, family, grid)
    return [m.embed(j, a) for j, a in enumerate(extremizer_arrays(p, case_label, m))]


def extremizer_arrays(p: BlockParams, case_label: str, m: SupportMultiplier) -> list[np.ndarray]:
    """Test functions restricted to the slot supports of ``m``."""
    if m.nnz == 0:
        raise ValueError("block multiplier has empty support")
    d = p.dim
    coords = [_slot_xi(m, j) for j in range(3)]
    ones = [np.ones(m.slot_size(j), dtype=np.complex128) for j in range(3)]
    if case_label in ("kdv-standard", "sppp-standard", "sppm-est", "sppm-pp", "w-standard",
                      "w-pm", "sppm-1d-standard"):
        return ones
    # coherent configurations: centre every slot on one densest support tuple
    counts = np.bincount(m.idx[0], minlength=m.slot_size(0))
    t = int(np.argmax(counts[m.idx[0]]))
    centre = [coords[j][m.idx[j][t], :d] for j in range(3)]
    if case_label in ("kdv-excep", "sppp-excep", "sppm-1d-excep"):
        nmax = float(max(p.N))
        lmed = float(sorted(p.L)[1])
        w = max(nmax ** -0.5 * lmed ** 0.5, float(m.group.spacing))
        return [(np.max(np.abs(coords[j][:, :d] - centre[j]), axis=1) <= w).astype(np.complex128)
                for j in range(3)]
    if case_label in ("kdv-weird", "sppm-excep", "sppm-1d-weak"):
        small = int(np.argmin(p.N))
        w = max(float(p.N[small]), float(m.group.spacing))
        out = []
        for j in range(3):
            if j == small:
                out.append(ones[j])
            else:
                out.append((np.max(np.abs(coords[j][:, :d] - centre[j]), axis=1) <= w)
                           .astype(np.complex128))
        return out
    if case_label == "wpp":
        n3 = float(p.N[2])
        out = []
        for j in range(3):
            out.append((np.max(np.abs(coords[j][:, :d] - centre[j]), axis=1) <= n3)
                       .astype(np.complex128))
        return out
    raise ValueError(f"no test functions for case {case_label!r}")


# orthogonal interactions


def rotate_multiplier(R, r, theta, M: int = 64, h=Q(1, 4)) -> TupleMultiplier:
    """chi_{|xi1|~R} chi_{|xi2|~r} chi_{angle(xi1, xi2) = pi/2 + O(theta)} on a planar grid."""
    g = real_grid(M, h, dim=2)
    R, r, theta = float(R), float(r), float(theta)
    ia, xa = _shell_points(g, R, 2 * R)
    ib, xb = _shell_points(g, r, 2 * r)
    A = np.repeat(np.arange(ia.size), ib.size)
    B = np.tile(np.arange(ib.size), ia.size)
    u, v = xa[A], xb[B]
    cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
    ang = np.arccos(np.clip(cosang, -1, 1))
    ok = np.abs(ang - math.pi / 2) <= theta
    idx0, idx1 = ia[A[ok]], ib[B[ok]]
    last, valid = g.close_tuple([idx0, idx1])
    idx = np.stack([idx0[valid], idx1[valid], last[valid]])
    return TupleMultiplier(g, idx, np.ones(idx.shape[1]))
