"""Finite models of abelian groups and integration over the zero-sum hyperplane.

A group is a product of identical axes, each either cyclic (indices mod M) or
a truncated real grid (index i sits at (i - M//2) * h and out-of-range sums
carry no mass). An optional truncated time axis turns Z into Z x R.

Multipliers on the hyperplane {xi_1 + ... + xi_k = 0} are stored as a sparse
list of support tuples, as a product of one-variable factors, or by any class
implementing the small ``Multiplier`` protocol below.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

KINDS = ("cycle", "torus-grid", "real-grid")


class GroupMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TimeAxis:
    points: int
    spacing: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "spacing", Fraction(self.spacing))
        if self.points < 1 or self.spacing <= 0:
            raise ValueError("time axis needs points >= 1 and positive spacing")

    @property
    def offset(self) -> int:
        return self.points // 2


@dataclass(frozen=True)
class GroupSpec:
    kind: str
    dim: int
    points: int
    spacing: Fraction = Fraction(1)
    time: TimeAxis | None = None

    def __post_init__(self):
        object.__setattr__(self, "spacing", Fraction(self.spacing))
        if self.kind not in KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.dim < 1 or self.points < 1:
            raise ValueError("dim and points must be positive")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if self.kind == "cycle" and self.spacing != 1:
            raise ValueError("cycle groups use counting measure (spacing 1)")

    # basic geometry

    @property
    def cyclic(self) -> bool:
        return self.kind != "real-grid"

    @property
    def offset(self) -> int:
        return 0 if self.cyclic else self.points // 2

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        if self.time is None:
            return self.spatial_shape
        return self.spatial_shape + (self.time.points,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spatial_size(self) -> int:
        return self.points ** self.dim

    @property
    def measure(self) -> Fraction:
        mu = self.spacing ** self.dim
        if self.time is not None:
            mu *= self.time.spacing
        return mu

    def axis_coordinates(self) -> np.ndarray:
        """Physical coordinate of each index along one spatial axis."""
        i = np.arange(self.points)
        h = float(self.spacing)
        if self.cyclic:
            # centred representative of i mod M
            return ((i + self.points // 2) % self.points - self.points // 2) * h
        return (i - self.offset) * h

    def time_coordinates(self) -> np.ndarray:
        if self.time is None:
            raise ValueError("group has no time axis")
        return (np.arange(self.time.points) - self.time.offset) * float(self.time.spacing)

    def coordinates(self, flat: np.ndarray) -> np.ndarray:
        """(P,) flat indices -> (P, dim[+1]) physical coordinates."""
        idx = np.unravel_index(np.asarray(flat), self.shape)
        ax = self.axis_coordinates()
        cols = [ax[idx[a]] for a in range(self.dim)]
        if self.time is not None:
            cols.append(self.time_coordinates()[idx[self.dim]])
        return np.stack(cols, axis=-1)

    def point_coordinates(self) -> np.ndarray:
        """Coordinates of every point, shape group.shape + (dim[+1],)."""
        return self.coordinates(np.arange(self.size)).reshape(self.shape + (-1,))

    def _axis_sizes(self):
        out = [(self.points, self.cyclic, self.offset)] * self.dim
        if self.time is not None:
            out.append((self.time.points, False, self.time.offset))
        return out

    def close_tuple(self, flats: Sequence[np.ndarray]):
        """Given k-1 flat index arrays, return (forced last index, valid mask).

        Real axes drop tuples whose forced coordinate leaves the box.
        """
        multi = [np.unravel_index(np.asarray(f), self.shape) for f in flats]
        n = np.broadcast(*[np.asarray(f) for f in flats]).shape
        valid = np.ones(n, dtype=bool)
        last = []
        for a, (m, cyc, o) in enumerate(self._axis_sizes()):
            s = sum((np.asarray(mi[a], dtype=np.int64) - o) for mi in multi)
            if cyc:
                last.append(np.mod(-s, m))
            else:
                i = o - s
                valid &= (i >= 0) & (i < m)
                last.append(np.clip(i, 0, m - 1))
        flat = np.ravel_multi_index(tuple(last), self.shape)
        return flat, valid

    def negate(self, flat: np.ndarray):
        """Flat index of -x and a validity mask."""
        idx = np.unravel_index(np.asarray(flat), self.shape)
        valid = np.ones(np.shape(flat), dtype=bool)
        out = []
        for a, (m, cyc, o) in enumerate(self._axis_sizes()):
            i = np.asarray(idx[a], dtype=np.int64)
            if cyc:
                out.append(np.mod(-i, m))
            else:
                j = 2 * o - i
                valid &= (j >= 0) & (j < m)
                out.append(np.clip(j, 0, m - 1))
        return np.ravel_multi_index(tuple(out), self.shape), valid

    def without_time(self) -> "GroupSpec":
        return GroupSpec(self.kind, self.dim, self.points, self.spacing)


def cycle(points: int, dim: int = 1) -> GroupSpec:
    return GroupSpec("cycle", dim, points)


def torus_grid(points: int, spacing=Fraction(1), dim: int = 1) -> GroupSpec:
    return GroupSpec("torus-grid", dim, points, Fraction(spacing))


def real_grid(points: int, spacing, dim: int = 1, time: TimeAxis | None = None) -> GroupSpec:
    return GroupSpec("real-grid", dim, points, Fraction(spacing), time)


@dataclass(frozen=True)
class GridFunction:
    group: GroupSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.size != self.group.size:
            raise ValueError(f"expected {self.group.size} values, got {v.size}")
        v = v.reshape(self.group.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @classmethod
    def zeros(cls, group: GroupSpec) -> "GridFunction":
        return cls(group, np.zeros(group.shape))

    @classmethod
    def ones(cls, group: GroupSpec) -> "GridFunction":
        return cls(group, np.ones(group.shape))

    @classmethod
    def indicator(cls, group: GroupSpec, flat_indices) -> "GridFunction":
        v = np.zeros(group.size, dtype=np.complex128)
        v[np.asarray(flat_indices)] = 1.0
        return cls(group, v)

    @classmethod
    def from_rule(cls, group: GroupSpec, rule: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """rule maps (P, dim[+1]) coordinates to P values."""
        pts = group.coordinates(np.arange(group.size))
        return cls(group, np.asarray(rule(pts), dtype=np.complex128))

    def __add__(self, other):
        _same_group(self.group, other.group)
        return GridFunction(self.group, self.values + other.values)

    def scaled(self, c) -> "GridFunction":
        return GridFunction(self.group, self.values * c)


def _same_group(a: GroupSpec, b: GroupSpec):
    if a != b:
        raise GroupMismatch(f"group mismatch: {a} vs {b}")


def l2_norm(f: GridFunction) -> float:
    mu = float(f.group.measure)
    return float(np.sqrt(np.sum(np.abs(f.flat) ** 2) * mu))


# multipliers


class Multiplier:
    """Protocol for k-linear multipliers on a finite group.

    Arguments are handled as flat complex arrays over ``slot_size(j)``
    points; the default slot is the whole group. Subclasses restricted to a
    support region override ``slot_size``/``embed``/``restrict``.
    """

    k: int
    group: GroupSpec

    @property
    def measure(self) -> float:
        return float(self.group.measure)

    def slot_size(self, j: int) -> int:
        return self.group.size

    def embed(self, j: int, arr: np.ndarray) -> GridFunction:
        return GridFunction(self.group, arr)

    def restrict(self, j: int, f: GridFunction) -> np.ndarray:
        return f.flat

    def partial(self, j: int, fs: Sequence[np.ndarray]) -> np.ndarray:
        """Integral of m * prod_{i != j} f_i over the section xi_j = eta."""
        raise NotImplementedError

    def form(self, fs: Sequence[np.ndarray]) -> complex:
        j = self.k - 1
        g = self.partial(j, fs)
        return complex(np.sum(g * fs[j]) * self.measure)

    def section_sums(self, j: int) -> np.ndarray:
        """Raw sums of |m|^2 over each section xi_j = eta (no measure factor).

        The section integral is ``measure ** (k - 2)`` times this.
        """
        raise NotImplementedError


class TupleMultiplier(Multiplier):
    """Sparse multiplier: explicit support tuples of flat indices and values."""

    def __init__(self, group: GroupSpec, idx: np.ndarray, vals: np.ndarray):
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.complex128)
        if idx.ndim != 2 or idx.shape[0] < 2 or idx.shape[1] != vals.shape[0]:
            raise ValueError("idx must be (k, P) matching vals (P,)")
        keep = vals != 0
        self.group = group
        self.k = idx.shape[0]
        self.idx = idx[:, keep]
        self.vals = vals[keep]
        self.idx.setflags(write=False)
        self.vals.setflags(write=False)

    @classmethod
    def from_rule(cls, group: GroupSpec, k: int, rule, candidates=None, chunk: int = 1 << 18):
        """Evaluate ``rule(coords)`` on hyperplane points.

        ``coords`` is a list of k arrays of shape (P, dim[+1]). ``candidates``
        optionally restricts the first k-1 slots to given flat index arrays.
        """
        if k < 2:
            raise ValueError("k must be at least 2")
        n = group.size
        cand = [np.arange(n) if (candidates is None or candidates[j] is None)
                else np.asarray(candidates[j], dtype=np.int64) for j in range(k - 1)]
        sizes = [len(c) for c in cand]
        total = int(np.prod(sizes))
        idx_parts, val_parts = [], []
        for start in range(0, total, chunk):
            lin = np.arange(start, min(total, start + chunk))
            sub = np.unravel_index(lin, sizes)
            flats = [cand[j][sub[j]] for j in range(k - 1)]
            last, ok = group.close_tuple(flats)
            flats = [f[ok] for f in flats] + [last[ok]]
            if not flats[0].size:
                continue
            v = np.asarray(rule([group.coordinates(f) for f in flats]), dtype=np.complex128)
            v = np.broadcast_to(v, flats[0].shape)
            nz = v != 0
            idx_parts.append(np.stack([f[nz] for f in flats]))
            val_parts.append(v[nz])
        if idx_parts:
            return cls(group, np.concatenate(idx_parts, axis=1), np.concatenate(val_parts))
        return cls(group, np.zeros((k, 0), dtype=np.int64), np.zeros(0))

    @classmethod
    def from_dense(cls, group: GroupSpec, k: int, table: np.ndarray):
        """table has shape (n,)*(k-1) indexed by the first k-1 flat indices."""
        table = np.asarray(table, dtype=np.complex128)
        n = group.size
        if table.shape != (n,) * (k - 1):
            raise ValueError("dense table shape mismatch")
        nz = np.nonzero(table)
        flats = [np.asarray(a, dtype=np.int64) for a in nz]
        last, ok = group.close_tuple(flats)
        flats = [f[ok] for f in flats] + [last[ok]]
        return cls(group, np.stack(flats), table[nz][ok])

    def dense(self) -> np.ndarray:
        n = self.group.size
        out = np.zeros((n,) * (self.k - 1), dtype=np.complex128)
        out[tuple(self.idx[:-1])] = self.vals
        return out

    @property
    def nnz(self) -> int:
        return self.vals.size

    def _bincount(self, j, w):
        n = self.slot_size(j)
        return (np.bincount(self.idx[j], weights=w.real, minlength=n)
                + 1j * np.bincount(self.idx[j], weights=w.imag, minlength=n))

    def partial(self, j, fs):
        w = self.vals.copy()
        for i in range(self.k):
            if i != j:
                w = w * np.asarray(fs[i])[self.idx[i]]
        return self._bincount(j, w) * self.measure ** (self.k - 2)

    def form(self, fs):
        w = self.vals
        for i in range(self.k):
            w = w * np.asarray(fs[i])[self.idx[i]]
        # numpy reduces with pairwise summation
        return complex(np.sum(w) * self.measure ** (self.k - 1))

    def section_sums(self, j):
        a = np.abs(self.vals) ** 2
        return np.bincount(self.idx[j], weights=a, minlength=self.slot_size(j))

    def permuted(self, perm: Sequence[int]) -> "TupleMultiplier":
        """Multiplier m'(xi) = m(xi_perm) so that slot i of m' is slot perm[i] of m."""
        return TupleMultiplier(self.group, self.idx[list(perm)], self.vals)

    def conj(self) -> "TupleMultiplier":
        return TupleMultiplier(self.group, self.idx, np.conj(self.vals))

    def scaled(self, c) -> "TupleMultiplier":
        return TupleMultiplier(self.group, self.idx, self.vals * c)


class SeparableMultiplier(Multiplier):
    """m(xi) = prod_j a_j(xi_j); hyperplane sums done with FFT convolutions."""

    def __init__(self, group: GroupSpec, factors: Sequence[np.ndarray]):
        if len(factors) < 2:
            raise ValueError("need at least two factors")
        self.group = group
        self.k = len(factors)
        self.factors = [np.asarray(a, dtype=np.complex128).reshape(-1) for a in factors]
        for a in self.factors:
            if a.size != group.size:
                raise ValueError("factor size mismatch")

    def _conv_axes(self):
        out = []
        for m, cyc, _ in self.group._axis_sizes():
            out.append((m, cyc))
        return out

    def _sum_of_others(self, arrays):
        """Distribution of the sum of the given functions' arguments as a function
        on the group, returned at -eta (so that the missing slot sees eta)."""
        axes = self._conv_axes()
        shape = self.group.shape
        # for real axes pad so that linear convolution of len(arrays) terms fits
        r = len(arrays)
        fft_shape = [m if cyc else r * m for m, cyc in axes]
        acc = None
        for a in arrays:
            F = np.fft.fftn(a.reshape(shape), s=fft_shape, axes=range(len(shape)))
            acc = F if acc is None else acc * F
        conv = np.fft.ifftn(acc, axes=range(len(shape)))
        # conv[s] with s = sum of indices; we need the index of -(sum of coords)
        # target index t satisfies coord(t) = -sum coord(i); i.e. for real axes
        # t = o - (s - r*o) = (r+1)*o - s, for cyclic t = -s mod m.
        grids = np.indices(shape)
        sel = []
        valid = np.ones(shape, dtype=bool)
        for a, (m, cyc) in enumerate(axes):
            t = grids[a]
            if cyc:
                sel.append(np.mod(-t, m))
            else:
                o = m // 2
                s = (r + 1) * o - t
                valid &= (s >= 0) & (s < fft_shape[a])
                sel.append(np.clip(s, 0, fft_shape[a] - 1))
        out = conv[tuple(sel)]
        out[~valid] = 0
        return out.reshape(-1)

    def partial(self, j, fs):
        others = [self.factors[i] * np.asarray(fs[i]) for i in range(self.k) if i != j]
        g = self._sum_of_others(others)
        return self.factors[j] * g * self.measure ** (self.k - 2)

    def section_sums(self, j):
        others = [np.abs(self.factors[i]) ** 2 for i in range(self.k) if i != j]
        g = np.maximum(self._sum_of_others(others).real, 0.0)
        return np.abs(self.factors[j]) ** 2 * g

    def to_tuples(self) -> TupleMultiplier:
        return _separable_tuples(self)


def _separable_tuples(m: SeparableMultiplier) -> TupleMultiplier:
    n = m.group.size
    grids = np.indices((n,) * (m.k - 1)).reshape(m.k - 1, -1)
    flats = list(grids)
    last, ok = m.group.close_tuple(flats)
    flats = [f[ok] for f in flats] + [last[ok]]
    v = np.ones(flats[0].shape, dtype=np.complex128)
    for a, f in zip(m.factors, flats):
        v = v * a[f]
    return TupleMultiplier(m.group, np.stack(flats), v)


def _check(m: Multiplier, fs: Sequence[GridFunction]):
    if len(fs) != m.k:
        raise ValueError(f"expected {m.k} functions, got {len(fs)}")
    for f in fs:
        _same_group(m.group, f.group)


def gamma_integrate(m: Multiplier, fs: Sequence[GridFunction]) -> complex:
    """Integral of m(xi) prod f_j(xi_j) over the zero-sum hyperplane."""
    _check(m, fs)
    return m.form([m.restrict(j, f) for j, f in enumerate(fs)])


def gamma_integrate_fast(m: Multiplier, fs: Sequence[GridFunction]) -> complex:
    """FFT route; only for product multipliers with k = 3."""
    _check(m, fs)
    if not isinstance(m, SeparableMultiplier):
        raise TypeError("fast path needs a SeparableMultiplier")
    if m.k != 3:
        raise ValueError("fast path is implemented for k = 3")
    return m.form([f.flat for f in fs])


def gamma_integrate_loop(m: TupleMultiplier, fs: Sequence[GridFunction]) -> complex:
    """Direct nested loop over the first k-1 indices (reference oracle)."""
    _check(m, fs)
    table = m.dense()
    n = m.group.size
    k = m.k
    total = 0j
    for tup in np.ndindex(*((n,) * (k - 1))):
        v = table[tup]
        if v == 0:
            continue
        last, ok = m.group.close_tuple([np.array(t) for t in tup])
        if not ok:
            continue
        p = v
        for j, t in enumerate(tup):
            p *= fs[j].flat[t]
        total += p * fs[k - 1].flat[int(last)]
    return total * float(m.group.measure) ** (k - 1)


# binary container

_MAGIC = b"XSBK1"
_HEADER = struct.Struct("<5sBIIqqI")


def _header(group: GroupSpec, k: int) -> bytes:
    if group.time is not None:
        raise ValueError("the binary container does not carry a time axis")
    h = group.spacing
    return _HEADER.pack(_MAGIC, KINDS.index(group.kind), group.dim, group.points,
                        h.numerator, h.denominator, k)


def _payload(vals: np.ndarray) -> bytes:
    v = np.asarray(vals, dtype=np.complex128).reshape(-1)
    inter = np.empty(2 * v.size, dtype="<f8")
    inter[0::2] = v.real
    inter[1::2] = v.imag
    return inter.tobytes()


def dumps_function(f: GridFunction) -> bytes:
    return _header(f.group, 1) + _payload(f.values)


def dumps_multiplier(m: TupleMultiplier) -> bytes:
    return _header(m.group, m.k) + _payload(m.dense())


def loads(data: bytes):
    """Inverse of dumps_*; returns a GridFunction (k=1) or TupleMultiplier."""
    if len(data) < _HEADER.size:
        raise ValueError("truncated container")
    magic, kind, d, M, hn, hd, k = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError("bad magic")
    group = GroupSpec(KINDS[kind], d, M, Fraction(hn, hd))
    raw = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    vals = raw[0::2] + 1j * raw[1::2]
    if k == 1:
        return GridFunction(group, vals)
    n = group.size
    return TupleMultiplier.from_dense(group, k, vals.reshape((n,) * (k - 1)))
