import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xsbound.lattice import (
    GridFunction, GroupMismatch, SeparableMultiplier, TimeAxis, TupleMultiplier,
    cycle, dumps_function, dumps_multiplier, gamma_integrate, gamma_integrate_fast,
    gamma_integrate_loop, l2_norm, loads, real_grid, torus_grid,
)


def rand_fn(group, rng):
    return GridFunction(group, rng.normal(size=group.shape) + 1j * rng.normal(size=group.shape))


def rand_tuple_mult(group, k, rng):
    n = group.size
    table = rng.normal(size=(n,) * (k - 1)) + 1j * rng.normal(size=(n,) * (k - 1))
    return TupleMultiplier.from_dense(group, k, table)


def test_single_point_indicator():
    g = cycle(3)
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0])))
    f = GridFunction.indicator(g, [0])
    assert gamma_integrate(m, [f, f, f]) == pytest.approx(1)


def test_constant_functions_count_hyperplane():
    g = cycle(3)
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0])))
    one = GridFunction.ones(g)
    assert gamma_integrate(m, [one] * 3) == pytest.approx(9)


def test_matches_direct_loop_cycle5():
    rng = np.random.default_rng(0)
    g = cycle(5)
    m = rand_tuple_mult(g, 3, rng)
    fs = [rand_fn(g, rng) for _ in range(3)]
    a = gamma_integrate(m, fs)
    b = gamma_integrate_loop(m, fs)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_real_grid_loop_drops_out_of_box():
    rng = np.random.default_rng(1)
    g = real_grid(6, Fraction(1, 2))
    m = rand_tuple_mult(g, 3, rng)
    # some tuples leave the box and must be gone
    assert m.nnz < 36
    fs = [rand_fn(g, rng) for _ in range(3)]
    a = gamma_integrate(m, fs)
    b = gamma_integrate_loop(m, fs)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_real_grid_forced_coordinate():
    g = real_grid(8, Fraction(1, 4))
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0])))
    c = [g.coordinates(m.idx[j])[:, 0] for j in range(3)]
    assert np.allclose(c[0] + c[1] + c[2], 0)


def test_fast_constant_cycle3():
    g = cycle(3)
    m = SeparableMultiplier(g, [np.ones(3)] * 3)
    one = GridFunction.ones(g)
    assert gamma_integrate_fast(m, [one] * 3) == pytest.approx(9)


@pytest.mark.parametrize("group", [cycle(64), real_grid(16, Fraction(1, 4)),
                                   torus_grid(6, Fraction(1, 2), dim=2),
                                   real_grid(8, Fraction(1, 2), time=TimeAxis(4, Fraction(1, 3)))])
def test_fast_matches_direct(group):
    rng = np.random.default_rng(2)
    m = SeparableMultiplier(group, [rng.normal(size=group.size) + 1j * rng.normal(size=group.size)
                                    for _ in range(3)])
    fs = [rand_fn(group, rng) for _ in range(3)]
    a = gamma_integrate_fast(m, fs)
    b = gamma_integrate(m.to_tuples(), fs)
    assert abs(a - b) <= 1e-9 * abs(b)


def test_fast_zero_functions():
    g = cycle(8)
    rng = np.random.default_rng(3)
    m = SeparableMultiplier(g, [rng.normal(size=8) for _ in range(3)])
    z = GridFunction.zeros(g)
    assert gamma_integrate_fast(m, [rand_fn(g, rng), z, z]) == 0


def test_fast_rejects_nonseparable():
    g = cycle(3)
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0])))
    with pytest.raises(TypeError):
        gamma_integrate_fast(m, [GridFunction.ones(g)] * 3)


def test_errors():
    g, g2 = cycle(3), cycle(4)
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0])))
    with pytest.raises(GroupMismatch):
        gamma_integrate(m, [GridFunction.ones(g)] * 2 + [GridFunction.ones(g2)])
    with pytest.raises(ValueError):
        gamma_integrate(m, [GridFunction.ones(g)] * 2)


def test_l2_norm_examples():
    g = cycle(3)
    assert l2_norm(GridFunction.indicator(g, [0])) == 1
    assert l2_norm(GridFunction.ones(g)) == pytest.approx(np.sqrt(3))
    assert l2_norm(GridFunction.ones(real_grid(4, Fraction(1, 4)))) == pytest.approx(1)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        GridFunction(cycle(2), [1, np.nan])


def test_partial_consistent_with_form():
    rng = np.random.default_rng(4)
    g = real_grid(6, Fraction(1, 3), dim=2)
    m = TupleMultiplier.from_rule(g, 3, lambda xs: np.cos(xs[0][:, 0] * xs[1][:, 1]) + 0.5j)
    fs = [rand_fn(g, rng).flat for _ in range(3)]
    ref = m.form(fs)
    for j in range(3):
        alt = np.sum(m.partial(j, fs) * fs[j]) * float(g.measure)
        assert abs(alt - ref) <= 1e-12 * abs(ref)


def test_serialization_roundtrip():
    rng = np.random.default_rng(5)
    g = real_grid(5, Fraction(3, 8))
    f = rand_fn(g, rng)
    f2 = loads(dumps_function(f))
    assert f2.group == g and np.array_equal(f2.values, f.values)
    m = rand_tuple_mult(g, 3, rng)
    m2 = loads(dumps_multiplier(m))
    assert np.array_equal(m2.dense(), m.dense())
    assert dumps_function(f)[:5] == b"XSBK1"


def test_bad_magic():
    with pytest.raises(ValueError):
        loads(b"NOPE!" + bytes(40))


groups = st.sampled_from([cycle(4), cycle(3, dim=2), real_grid(5, Fraction(1, 2)), torus_grid(4, Fraction(1, 4))])


@settings(max_examples=30, deadline=None)
@given(groups, st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]))
def test_permutation_symmetry(group, seed, perm):
    rng = np.random.default_rng(seed)
    m = rand_tuple_mult(group, 3, rng)
    fs = [rand_fn(group, rng) for _ in range(3)]
    mp = m.permuted(perm)
    # slot i of mp carries slot perm[i] of m
    fp = [fs[perm[i]] for i in range(3)]
    a, b = gamma_integrate(m, fs), gamma_integrate(mp, fp)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=30, deadline=None)
@given(groups, st.integers(0, 2**32 - 1), st.integers(0, 2),
       st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_linearity(group, seed, slot, c):
    rng = np.random.default_rng(seed)
    m = rand_tuple_mult(group, 3, rng)
    fs = [rand_fn(group, rng) for _ in range(3)]
    g = rand_fn(group, rng)
    lhs_fs = list(fs)
    lhs_fs[slot] = fs[slot] + g.scaled(c)
    alt = list(fs)
    alt[slot] = g
    lhs = gamma_integrate(m, lhs_fs)
    rhs = gamma_integrate(m, fs) + c * gamma_integrate(m, alt)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs), abs(rhs))


def test_k4_against_loop():
    rng = np.random.default_rng(6)
    g = cycle(4)
    m = rand_tuple_mult(g, 4, rng)
    fs = [rand_fn(g, rng) for _ in range(4)]
    assert abs(gamma_integrate(m, fs) - gamma_integrate_loop(m, fs)) < 1e-10


def test_negate():
    g = real_grid(4, 1)
    flat, ok = g.negate(np.arange(4))
    cs = g.axis_coordinates()
    assert np.allclose(cs[flat[ok]], -cs[np.arange(4)[ok]])
    assert ok.sum() == 3  # -2 has no partner in [-2, 1]
