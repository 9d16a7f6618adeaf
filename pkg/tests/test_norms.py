import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xsbound.lattice import (
    GridFunction, SeparableMultiplier, TupleMultiplier, cycle, gamma_integrate, real_grid,
    torus_grid,
)
from xsbound.norms import (
    AltMaxConfig, alt_max, ascend, compose_product, conjugate_reflect, cs_upper, cs_upper_exact,
    cs_upper_min, dilate, estimate, k2_exact, permute, rayleigh, schur_sum_bound, sum_multipliers,
    tensor_product, translate, tt_star,
)


def const_mult(g, k, c=1.0):
    return TupleMultiplier.from_rule(g, k, lambda xs: np.full(len(xs[0]), c, dtype=complex))


def rand_mult(g, k, rng, nonneg=False, density=1.0):
    n = g.size
    shape = (n,) * (k - 1)
    t = rng.random(shape) if nonneg else rng.normal(size=shape) + 1j * rng.normal(size=shape)
    if density < 1:
        t = t * (rng.random(shape) < density)
    return TupleMultiplier.from_dense(g, k, t)


def rand_fn(g, rng):
    return GridFunction(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))


# rayleigh

def test_rayleigh_examples():
    g = cycle(3)
    m = const_mult(g, 3)
    d = GridFunction.indicator(g, [0])
    assert rayleigh(m, [d] * 3) == pytest.approx(1)
    one = GridFunction.ones(g)
    assert rayleigh(m, [one] * 3) == pytest.approx(math.sqrt(3))


def test_rayleigh_scale_invariant():
    rng = np.random.default_rng(0)
    g = cycle(5)
    m = rand_mult(g, 3, rng)
    fs = [rand_fn(g, rng) for _ in range(3)]
    r = rayleigh(m, fs)
    assert rayleigh(m, [fs[0].scaled(3.5), fs[1], fs[2].scaled(0.1)]) == pytest.approx(r, rel=1e-12)


def test_rayleigh_zero_function_error():
    g = cycle(3)
    with pytest.raises(ValueError):
        rayleigh(const_mult(g, 3), [GridFunction.zeros(g)] + [GridFunction.ones(g)] * 2)


# alt_max

def test_alt_max_k2_is_sup():
    rng = np.random.default_rng(1)
    m = rand_mult(cycle(16), 2, rng)
    assert abs(alt_max(m).lower - k2_exact(m)) < 1e-6


def test_alt_max_constant_cycle3():
    g = cycle(3)
    m = const_mult(g, 3)
    x = np.arange(3)
    chars = [[np.exp(2j * np.pi * q * x / 3)] * 3 for q in range(3)]
    est = alt_max(m, seeds=chars)
    assert abs(est.lower - math.sqrt(3)) < 1e-6


def test_alt_max_constant_cycle3_circulant_oracle():
    # for m = 1 the form is <f1 * f2, conj f3>; its norm is the sup over unit f1
    # of the circulant operator norm, which is max |fourier(f1)| <= sqrt(3)
    rng = np.random.default_rng(2)
    best = 0
    for _ in range(200):
        f = rng.normal(size=3) + 1j * rng.normal(size=3)
        f /= np.linalg.norm(f)
        C = np.array([[f[(i - j) % 3] for j in range(3)] for i in range(3)])
        best = max(best, np.linalg.norm(C, 2))
    x = np.arange(3)
    f = np.exp(2j * np.pi * x / 3) / math.sqrt(3)
    C = np.array([[f[(i - j) % 3] for j in range(3)] for i in range(3)])
    assert best <= math.sqrt(3) + 1e-12
    assert np.linalg.norm(C, 2) == pytest.approx(math.sqrt(3), abs=1e-12)


def test_alt_max_box_cycle8():
    rng = np.random.default_rng(3)
    a = rng.normal(size=8)
    m = SeparableMultiplier(cycle(8), [a, np.ones(8), np.ones(8)])
    assert alt_max(m).lower == pytest.approx(np.linalg.norm(a), rel=0.01)


def test_alt_max_zero():
    g = cycle(4)
    m = TupleMultiplier(g, np.zeros((3, 0), dtype=int), np.zeros(0))
    est = alt_max(m)
    assert est.lower == 0 and est.zero and est.witness is None


def test_witness_reproduces_lower():
    rng = np.random.default_rng(4)
    g = real_grid(6, Fraction(1, 2))
    m = rand_mult(g, 3, rng)
    est = alt_max(m, AltMaxConfig(restarts=3))
    assert rayleigh(m, est.witness) == pytest.approx(est.lower, rel=1e-9)


def test_ascent_is_monotone():
    rng = np.random.default_rng(5)
    g = cycle(6)
    m = rand_mult(g, 3, rng)
    start = [rng.normal(size=6) + 0j for _ in range(3)]
    _, _, hist = ascend(m, start, 30, 1e-14)
    assert all(b >= a * (1 - 1e-12) for a, b in zip(hist, hist[1:]))


def test_alt_max_deterministic():
    rng = np.random.default_rng(6)
    m = rand_mult(cycle(5), 3, rng)
    cfg = AltMaxConfig(restarts=2, seed=11)
    assert alt_max(m, cfg).lower == alt_max(m, cfg).lower


def test_config_validation():
    with pytest.raises(ValueError):
        AltMaxConfig(restarts=0)
    with pytest.raises(ValueError):
        AltMaxConfig(tol=0)


# cs_upper

def test_cs_upper_box_is_l2():
    rng = np.random.default_rng(7)
    a = rng.normal(size=16)
    m = SeparableMultiplier(cycle(16), [a, np.ones(16), np.ones(16)])
    assert cs_upper(m, 1) == pytest.approx(np.linalg.norm(a), rel=1e-12)
    assert cs_upper(m, 2) == pytest.approx(np.linalg.norm(a), rel=1e-12)


def test_cs_upper_characteristic_sets():
    g = cycle(8)
    A = np.zeros(8)
    A[[0, 1]] = 1
    m = SeparableMultiplier(g, [A, A, np.ones(8)])
    assert cs_upper(m, 2) == pytest.approx(math.sqrt(2), abs=1e-12)
    # general A, B: max overlap |A cap (eta - B)|
    rng = np.random.default_rng(8)
    A = (rng.random(8) < 0.5).astype(float)
    B = (rng.random(8) < 0.5).astype(float)
    m = SeparableMultiplier(g, [A, B, np.ones(8)])
    overlap = max(sum(A[x] * B[(s - x) % 8] for x in range(8)) for s in range(8))
    assert cs_upper(m, 2) ** 2 == pytest.approx(overlap, abs=1e-9)


def test_k2_exact_examples():
    g = cycle(5)
    assert k2_exact(const_mult(g, 2, 2.5 - 1j)) == pytest.approx(abs(2.5 - 1j))
    z = TupleMultiplier(g, np.zeros((2, 0), dtype=int), np.zeros(0))
    assert k2_exact(z) == 0
    with pytest.raises(ValueError):
        k2_exact(const_mult(g, 3))


# transforms

def test_translate_inverse_bitwise():
    rng = np.random.default_rng(9)
    g = cycle(7, dim=2)
    m = rand_mult(g, 3, rng, density=0.3)
    sh = [[1, 2], [3, -1], [-4, -1]]
    back = translate(translate(m, sh), [[-a for a in v] for v in sh])
    key = lambda t: np.lexsort(t.idx)
    assert np.array_equal(back.idx[:, key(back)], m.idx[:, key(m)])
    assert np.array_equal(back.vals[key(back)], m.vals[key(m)])


def test_translate_off_hyperplane():
    m = const_mult(cycle(5), 3)
    with pytest.raises(ValueError):
        translate(m, [[1], [1], [1]])


def test_translation_invariance_exact():
    rng = np.random.default_rng(10)
    g = cycle(6)
    m = rand_mult(g, 3, rng, density=0.5)
    sh = [[2], [1], [3]]
    mt = translate(m, sh)
    for j in range(3):
        assert cs_upper(mt, j) == cs_upper(m, j)
    m2 = rand_mult(g, 2, rng)
    assert k2_exact(translate(m2, [[1], [-1]])) == k2_exact(m2)
    # ascent from translated seeds retraces the untranslated run
    start = [rng.normal(size=6) + 1j * rng.normal(size=6) for _ in range(3)]
    moved = [np.roll(start[j], sh[j][0]) for j in range(3)]
    v1, _, _ = ascend(m, start, 20, 1e-12)
    v2, _, _ = ascend(mt, moved, 20, 1e-12)
    assert abs(v1 - v2) <= 1e-12 * v1


def test_permute_cs():
    rng = np.random.default_rng(11)
    m = rand_mult(cycle(5), 3, rng)
    sigma = [2, 0, 1]
    mp = permute(m, sigma)
    for j in range(3):
        assert cs_upper(mp, sigma[j]) == pytest.approx(cs_upper(m, j), rel=1e-14)


def test_dilate_real_grid_exact_ratio():
    rng = np.random.default_rng(12)
    g = real_grid(8, Fraction(1, 4))
    for _ in range(5):
        m = rand_mult(g, 3, rng)
        md = dilate(m, 2)
        for j in range(3):
            f0, s0 = cs_upper_exact(m, j)
            f1, s1 = cs_upper_exact(md, j)
            assert f1 / f0 == 2 and s1 == s0


def test_dilate_cycle_automorphism():
    rng = np.random.default_rng(13)
    m = rand_mult(cycle(7), 3, rng)
    md = dilate(m, 3)
    for j in range(3):
        assert cs_upper(md, j) == pytest.approx(cs_upper(m, j), rel=1e-14)
    with pytest.raises(ValueError):
        dilate(const_mult(cycle(8), 3), 2)


def test_conjugate_reflect_norm():
    rng = np.random.default_rng(14)
    g = cycle(6)
    a, b = rng.random(6), rng.random(6)
    m = SeparableMultiplier(g, [a, b, np.ones(6)]).to_tuples()
    mr = conjugate_reflect(m, [0])
    # factors m1(-xi1) m2(xi2) keep every norm quantity
    ref = SeparableMultiplier(g, [a[(-np.arange(6)) % 6], b, np.ones(6)])
    for j in range(3):
        assert cs_upper(mr, j) == pytest.approx(cs_upper(ref, j), rel=1e-12)
    cfg = AltMaxConfig(restarts=4)
    assert alt_max(mr, cfg).lower == pytest.approx(alt_max(m, cfg).lower, rel=1e-4)


# tensor products

def test_tensor_trivial_group():
    rng = np.random.default_rng(15)
    m1 = rand_mult(cycle(4), 3, rng)
    one = const_mult(cycle(1), 3)
    t = tensor_product(m1, one)
    assert np.array_equal(t.vals, m1.vals)


def test_tensor_cs_factorizes():
    rng = np.random.default_rng(16)
    m1 = rand_mult(cycle(4), 3, rng)
    m2 = rand_mult(cycle(4), 3, rng)
    t = tensor_product(m1, m2)
    for j in range(3):
        assert cs_upper(t, j) == pytest.approx(cs_upper(m1, j) * cs_upper(m2, j), rel=1e-12)


def test_tensor_alt_max_supermultiplicative():
    rng = np.random.default_rng(17)
    m1 = rand_mult(cycle(3), 3, rng, nonneg=True)
    m2 = rand_mult(cycle(3), 3, rng, nonneg=True)
    cfg = AltMaxConfig(restarts=4)
    e1, e2 = alt_max(m1, cfg), alt_max(m2, cfg)
    t = tensor_product(m1, m2)
    seed = [np.kron(e1.witness[j].flat, e2.witness[j].flat) for j in range(3)]
    et = alt_max(t, cfg, seeds=[seed])
    assert et.lower >= e1.lower * e2.lower - 1e-9


# TT*

def test_tt_star_constant_one_variable():
    g = cycle(3)
    m = const_mult(g, 2)
    T = tt_star(m)
    assert T.k == 2
    assert k2_exact(T) == pytest.approx(k2_exact(m) ** 2)


def test_tt_star_one_variable_cycle8():
    rng = np.random.default_rng(18)
    m = TupleMultiplier.from_dense(cycle(8), 2, rng.random(8))
    T = tt_star(m)
    assert math.sqrt(alt_max(T).lower) == pytest.approx(alt_max(m).lower, rel=0.05)


def test_tt_star_random_nonneg_k2():
    rng = np.random.default_rng(19)
    for _ in range(3):
        m = rand_mult(cycle(8), 3, rng, nonneg=True)
        lhs = math.sqrt(alt_max(tt_star(m)).lower)
        rhs = alt_max(m).lower
        assert abs(lhs - rhs) <= 0.05 * rhs


def test_tt_star_rejects_complex():
    rng = np.random.default_rng(20)
    with pytest.raises(ValueError):
        tt_star(rand_mult(cycle(4), 3, rng))


def test_tt_star_known_support():
    # on cycle(M) with k=2 free variables: M^3 tuples in the 4-slot product
    rng = np.random.default_rng(21)
    m = rand_mult(cycle(5), 3, rng, nonneg=True)
    assert tt_star(m).nnz == 125


# Schur

def test_schur_single_part():
    rng = np.random.default_rng(22)
    m = rand_mult(cycle(5), 3, rng)
    assert schur_sum_bound([m], 1, 1, [0], [1]) == pytest.approx(cs_upper_min(m))


def test_schur_disjoint_parts():
    g = cycle(8)
    rng = np.random.default_rng(23)
    parts = []
    for lo in (0, 4):
        a = np.zeros(8)
        a[lo:lo + 4] = rng.random(4)
        b = np.zeros(8)
        b[lo:lo + 4] = rng.random(4)
        parts.append(SeparableMultiplier(g, [a, b, np.ones(8)]).to_tuples())
    bound = schur_sum_bound(parts, 1, 1, [0], [1])
    assert bound == pytest.approx(max(cs_upper_min(p) for p in parts))
    assert alt_max(sum_multipliers(parts), AltMaxConfig(restarts=4)).lower <= bound * (1 + 1e-9)


def test_schur_overlap_violation():
    m = const_mult(cycle(4), 3)
    with pytest.raises(ValueError):
        schur_sum_bound([m, m], 1, 1, [0], [1])


def test_schur_annuli_bound_holds():
    rng = np.random.default_rng(24)
    g = cycle(16)
    x = np.abs(g.axis_coordinates())
    base = rng.random((16, 16))
    parts = []
    for lo, hi in ((0, 1), (1, 2), (2, 4), (4, 9)):
        band = ((x >= lo) & (x < hi)).astype(float)
        parts.append(TupleMultiplier.from_dense(g, 3, base * np.outer(band, band)))
    bound = schur_sum_bound(parts, 1, 1, [0], [1])
    assert alt_max(sum_multipliers(parts), AltMaxConfig(restarts=3)).lower <= bound * (1 + 1e-9)


# invariants

small_groups = st.sampled_from([cycle(4), cycle(5), real_grid(6, Fraction(1, 2)), torus_grid(4, Fraction(1, 3))])
fast = AltMaxConfig(restarts=2, iterations=30)


@settings(max_examples=25, deadline=None)
@given(small_groups, st.integers(0, 2**32 - 1))
def test_sandwich(g, seed):
    rng = np.random.default_rng(seed)
    m = rand_mult(g, 3, rng, density=0.6)
    est = estimate(m, fast)
    assert est.lower <= est.upper * (1 + 1e-9)


@settings(max_examples=25, deadline=None)
@given(small_groups, st.integers(0, 2**32 - 1))
def test_comparison(g, seed):
    rng = np.random.default_rng(seed)
    n = g.size
    big = rng.random((n, n))
    small = big * rng.random((n, n))
    M, m = TupleMultiplier.from_dense(g, 3, big), TupleMultiplier.from_dense(g, 3, small)
    for j in range(3):
        assert cs_upper(m, j) <= cs_upper(M, j) * (1 + 1e-12)
    fs = [GridFunction(g, rng.random(g.shape)) for _ in range(3)]
    assert gamma_integrate(m, fs).real <= gamma_integrate(M, fs).real * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(small_groups, st.integers(0, 2**32 - 1), st.sampled_from([0.25, 0.5, 0.75]))
def test_convexity(g, seed, theta):
    rng = np.random.default_rng(seed)
    n = g.size
    a, b = rng.random((n, n)), rng.random((n, n))
    m1, m2 = TupleMultiplier.from_dense(g, 3, a), TupleMultiplier.from_dense(g, 3, b)
    mix = TupleMultiplier.from_dense(g, 3, a ** theta * b ** (1 - theta))
    for j in range(3):
        assert cs_upper(mix, j) <= cs_upper(m1, j) ** theta * cs_upper(m2, j) ** (1 - theta) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Fraction(2), Fraction(1, 2), Fraction(3)]))
def test_scaling_law(seed, lam):
    rng = np.random.default_rng(seed)
    m = rand_mult(real_grid(6, Fraction(1, 2), dim=1), 3, rng)
    md = dilate(m, lam)
    for j in range(3):
        f0, s0 = cs_upper_exact(m, j)
        f1, s1 = cs_upper_exact(md, j)
        assert f1 / f0 == lam and s0 == s1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_bound(seed):
    rng = np.random.default_rng(seed)
    g = cycle(4)
    m1 = rand_mult(g, 3, rng, nonneg=True)
    m2 = rand_mult(g, 2, rng, nonneg=True)
    comp = compose_product(m1, m2)
    assert comp.k == 3
    bound = cs_upper_min(m1) * cs_upper_min(m2)
    assert alt_max(comp, fast).lower <= bound * (1 + 1e-6)
