import itertools
import math
from fractions import Fraction as Q

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xsbound.blocks import (
    BlockGrid, BlockParams, SupportMultiplier, block_bound, block_multiplier, extremizer,
    extremizer_arrays, kdv_block, rotate_bound, rotate_multiplier, schro_ppm_block,
    schro_ppp_block, transversality_bound, wave_block,
)
from xsbound.dyadic import eval_log
from xsbound.lattice import gamma_integrate
from xsbound.norms import AltMaxConfig, alt_max, rayleigh, rayleigh_arrays

G1 = BlockGrid(64, Q(1, 4))
G2 = BlockGrid(32, Q(1, 2))


def P(N, L, H, **kw):
    return BlockParams(N, L, H, **kw)


# closed forms


def test_kdv_examples():
    b = kdv_block(P((4, 4, 1), (16, 4, 1), 16))
    assert b.case_label == "kdv-standard" and b.value == pytest.approx(0.5, abs=1e-12)
    assert kdv_block(P((8, 2, 1), (16, 4, 1), 16)).value == 0
    b = kdv_block(P((4, 4, 4), (64, 4, 1), 64))
    assert b.case_label == "kdv-excep" and b.value == pytest.approx(1.0, abs=1e-12)
    b = kdv_block(P((1, 8, 8), (64, 4, 1), 64))
    assert b.case_label == "kdv-weird" and b.value == pytest.approx(math.sqrt(32) / 8, abs=1e-12)


def test_kdv_periodic_bracket():
    # the inner factor is below one, so the bracket floors it at 1
    p = P((4, 4, 1), (16, 4, 1), 16, setting="periodic")
    assert kdv_block(p).value == pytest.approx(1.0)
    assert block_bound("kdv-t", P((4, 4, 1), (16, 4, 1), 16)).value == pytest.approx(1.0)


def test_wave_examples():
    assert wave_block(P((8, 8, 1), (8, 8, 8), 8, signs=(1, 1, 1), dim=3)).value == 0
    b = wave_block(P((8, 8, 1), (8, 8, 8), 8, signs=(1, 1, -1), dim=3))
    assert b.case_label == "wpp" and b.value == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert wave_block(P((8, 8, 1), (1, 8, 1), 8, signs=(1, 1, -1), dim=3)).value == 0
    b = wave_block(P((8, 2, 8), (1, 1, 2), 2, signs=(1, 1, -1), dim=3))
    assert b.case_label == "w-standard" and b.value == pytest.approx(2.0, abs=1e-12)


def test_wave_normalization_logged():
    b = wave_block(P((8, 1, 8), (8, 8, 8), 8, signs=(-1, 1, -1), dim=3))
    # the odd sign is +; it moves to slot 3 and time is reversed
    assert b.frame[2] == 1 and b.time_reversed


def test_schro_examples():
    b = schro_ppp_block(P((4, 4, 4), (16, 4, 1), 16, dim=2))
    assert b.case_label == "sppp-standard" and b.value == pytest.approx(2.0, abs=1e-12)
    b = schro_ppp_block(P((4, 4, 4), (16, 4, 1), 16, dim=1))
    assert b.case_label == "sppp-excep" and b.value == pytest.approx(math.sqrt(2), abs=1e-12)
    assert schro_ppp_block(P((8, 2, 1), (16, 4, 1), 16, dim=2)).value == 0
    b = schro_ppm_block(P((8, 2, 8), (1, 4, 4), 4, dim=2, eps=0))
    assert b.value == pytest.approx(1.0, abs=1e-12)
    assert schro_ppm_block(P((8, 8, 1), (16, 4, 1), 16, dim=2)).value == 0
    # in d=3 the N_min factor is N_min^1, so the value is 2^{1/2}; the min term is 1 so eps is moot
    b = schro_ppm_block(P((8, 2, 8), (1, 4, 4), 4, dim=3, eps=Q(1, 20)))
    assert b.case_label == "sppm-est" and b.value == pytest.approx(math.sqrt(2), abs=1e-12)


def test_rotate_and_transversality():
    assert rotate_bound(16, 4, Q(1, 8), 2) == pytest.approx(1.0, abs=1e-12)
    for r in (1, 2, 4):
        assert rotate_bound(r, r, 1, 2) == pytest.approx(r)
    assert transversality_bound(4, 1, 0.25, 2, (100, 100)) == pytest.approx(2 * 1 * 2 * math.sqrt(2))
    assert transversality_bound(4, 1, 0.25, 2, (1, 100)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rotate_bound(1, 2, 0.5, 2)
    with pytest.raises(ValueError):
        rotate_bound(2, 1, 0.5, 1)


def test_param_validation():
    with pytest.raises(ValueError):
        P((3, 4, 1), (1, 1, 1), 4)
    with pytest.raises(ValueError):
        P((4, 4, 1), (Q(1, 2), 1, 1), 4)
    with pytest.raises(ValueError):
        P((4, 4, 1), (1, 1, 1), 4, signs=(1, 0, 1))
    with pytest.raises(ValueError):
        block_bound("klein-gordon", P((4, 4, 1), (1, 1, 1), 4))
    with pytest.raises(ValueError):
        wave_block(P((4, 4, 1), (1, 1, 1), 4, dim=1))


dy = st.sampled_from([1, 2, 4, 8, 16, 32, 64])
families = [("kdv-r", 1, (1, 1, 1)), ("kdv-t", 1, (1, 1, 1)), ("wave", 2, (1, 1, -1)),
            ("wave", 3, (1, -1, 1)), ("schro-ppp", 1, (1, 1, 1)), ("schro-ppp", 2, (1, 1, 1)),
            ("schro-ppm", 1, (1, 1, -1)), ("schro-ppm", 2, (1, 1, -1)),
            ("schro-ppm", 3, (1, 1, -1))]


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(families), st.tuples(dy, dy, dy), st.tuples(dy, dy, dy), dy,
       st.integers(0, 2))
def test_monotone_in_modulation(fam, N, L, H, j):
    name, d, signs = fam
    p = P(N, L, H, dim=d, signs=signs)
    bigger = list(L)
    bigger[j] *= 2
    q = P(N, tuple(bigger), H, dim=d, signs=signs)
    a = block_bound(name, p)
    if a.vanishes:
        return
    # each case formula is nondecreasing in every modulation
    frame = q.permuted(a.frame)
    assert 2.0 ** float(eval_log(a.symbolic, frame.env())) >= a.value * (1 - 1e-12)
    b = block_bound(name, q)
    if b.case_label == a.case_label:
        assert b.value >= a.value * (1 - 1e-12)


@settings(max_examples=300, deadline=None)
@given(st.tuples(dy, dy, dy), st.tuples(dy, dy, dy), dy, st.booleans())
def test_kdv_permutation_symmetry(N, L, H, periodic):
    setting = "periodic" if periodic else "nonperiodic"
    base = kdv_block(P(N, L, H, setting=setting))
    for perm in itertools.permutations(range(3)):
        q = P(tuple(N[i] for i in perm), tuple(L[i] for i in perm), H, setting=setting)
        b = kdv_block(q)
        assert b.value == pytest.approx(base.value, rel=1e-12)
        assert b.case_label == base.case_label


@settings(max_examples=300, deadline=None)
@given(st.tuples(dy, dy, dy), st.tuples(dy, dy, dy), dy, st.integers(2, 3))
def test_swap_symmetry(N, L, H, d):
    swap = (1, 0, 2)
    for fn, signs in ((wave_block, (1, 1, -1)), (schro_ppm_block, (1, 1, -1))):
        p = P(N, L, H, dim=d, signs=signs)
        a, b = fn(p), fn(p.permuted(swap))
        assert a.value == pytest.approx(b.value, rel=1e-12)


# numerical multipliers


def test_support_matches_direct_enumeration():
    p = P((2, 2, 4), (32, 4, 1), 16)
    m = block_multiplier(p, "kdv-r", G1)
    g = m.group
    coords = [g.coordinates(t) for t in m.global_tuples()]
    xi = np.stack([c[:, 0] for c in coords])
    tau = np.stack([c[:, 1] for c in coords])
    assert np.allclose(xi.sum(0), 0) and np.allclose(tau.sum(0), 0)
    # brute force over all (xi1, xi2, tau1, tau2) grid points
    h, ht = float(g.spacing), float(g.time.spacing)
    xs = g.axis_coordinates()
    ts = g.time_coordinates()
    count = 0
    band = lambda lam, L: (abs(lam) >= L - 1e-9) & (abs(lam) < 2 * L - 1e-9)
    shell = lambda x, N: (abs(x) >= N - 1e-12) & (abs(x) < 2 * N - 1e-12)
    X1, X2 = np.meshgrid(xs[shell(xs, 2)], xs[shell(xs, 2)], indexing="ij")
    X3 = -(X1 + X2)
    ok = shell(X3, 4) & (np.abs(X1 * X2 * X3) >= 16) & (np.abs(X1 * X2 * X3) < 32)
    for x1, x2, x3 in zip(X1[ok], X2[ok], X3[ok]):
        t1 = ts[band(ts - x1 ** 3, 32)]
        t2 = ts[band(ts - x2 ** 3, 4)]
        T1, T2 = np.meshgrid(t1, t2, indexing="ij")
        T3 = -(T1 + T2)
        count += int(np.sum(band(T3 - x3 ** 3, 1) & (np.abs(T3) <= ts.max() + 1e-9)))
    assert m.nnz == count > 0
    assert math.isclose(h, 0.25) and ht > 0


def test_support_multiplier_matches_global_tuples():
    p = P((2, 2, 4), (32, 4, 1), 16)
    m = block_multiplier(p, "kdv-r", G1)
    t = m.to_tuple_multiplier()
    rng = np.random.default_rng(0)
    fs = [m.embed(j, rng.standard_normal(m.slot_size(j))) for j in range(3)]
    assert gamma_integrate(m, fs) == pytest.approx(gamma_integrate(t, fs), rel=1e-10)
    small = block_multiplier(P((1, 1, 2), (4, 1, 1), 2), "kdv-r", G1)
    fs = [small.embed(j, rng.standard_normal(small.slot_size(j))) for j in range(3)]
    # plain loop over global support tuples
    mu = float(small.group.measure) ** 2
    ref = sum(fs[0].flat[a] * fs[1].flat[b] * fs[2].flat[c] for a, b, c in small.global_tuples().T)
    assert gamma_integrate(small, fs) == pytest.approx(ref * mu, rel=1e-10)


def test_vanishing_frequency_params_give_empty_support():
    assert block_multiplier(P((4, 1, 1), (16, 4, 1), 4), "kdv-r", G1).nnz == 0
    assert block_multiplier(P((4, 4, 4), (64, 4, 1), 32), "kdv-r", G1).nnz == 0


def test_grid_too_small():
    with pytest.raises(ValueError):
        block_multiplier(P((8, 8, 1), (64, 4, 1), 64), "kdv-r", G1)


def _ambiguous_kdv(p: BlockParams) -> bool:
    """Ratios where the factor-4 rule and the exact shells can disagree."""
    prod = p.N[0] * p.N[1] * p.N[2]
    ls = sorted(p.L)
    t = ls[2] / max(p.H, ls[1])
    return p.H / prod in (Q(1, 2), 4) or t in (4, 8) or Q(sorted(p.N)[2], sorted(p.N)[1]) == 2


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.sampled_from([1, 2, 4])] * 3), st.tuples(*[st.sampled_from([1, 4, 16, 64, 256])] * 3),
       st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128]))
def test_vanishing_label_implies_empty_support(N, L, H):
    p = P(N, L, H)
    if _ambiguous_kdv(p):
        return
    if kdv_block(p).vanishes:
        assert block_multiplier(p, "kdv-r", G1).nnz == 0


INTERIOR = {
    "kdv-r": [((4, 4, 1), (64, 4, 1), 32, 1, (1, 1, 1)), ((4, 4, 1), (64, 16, 2), 32, 1, (1, 1, 1)),
              ((2, 2, 4), (32, 16, 1), 16, 1, (1, 1, 1)), ((1, 4, 4), (64, 8, 2), 32, 1, (1, 1, 1))],
    "wave": [((4, 4, 1), (4, 4, 4), 4, 2, (1, 1, -1)), ((4, 1, 4), (1, 1, 2), 1, 2, (1, 1, -1)),
             ((4, 1, 4), (1, 2, 1), 1, 2, (1, 1, -1))],
    "schro-ppp": [((2, 2, 2), (8, 2, 1), 4, 2, (1, 1, 1))],
    "schro-ppm": [((4, 4, 1), (16, 4, 1), 16, 2, (1, 1, -1))],
}


@pytest.mark.parametrize("family,case", [(f, c) for f, cs in INTERIOR.items() for c in cs])
def test_upper_consistency_and_sharpness(family, case):
    N, L, H, d, signs = case
    p = P(N, L, H, dim=d, signs=signs)
    b = block_bound(family, p)
    m = block_multiplier(p, family, G1 if d == 1 else G2)
    assert m.nnz > 0 and not b.vanishes
    fs = extremizer(p, family, b.case_label, m)
    lower = rayleigh(m, fs)
    est = alt_max(m, AltMaxConfig(restarts=2, iterations=30, seed=3), seeds=[fs])
    assert lower >= b.value / 16
    assert est.lower <= 16 * b.value
    assert est.lower >= lower * (1 - 1e-9)


def test_extremizer_wrong_case():
    p = P((4, 4, 1), (16, 4, 1), 16)
    with pytest.raises(ValueError):
        extremizer(p, "kdv-r", "kdv-excep", G1)


def test_knapp_slabs_overlap():
    p = P((2, 2, 4), (32, 4, 1), 16)
    m = block_multiplier(p, "kdv-r", G1)
    arrs = extremizer_arrays(p, "kdv-excep", m)
    width = max(4 ** -0.5 * 4 ** 0.5, 0.25)
    for j, a in enumerate(arrs):
        xi = m.group.coordinates(m.slot_points[j][a != 0])[:, 0]
        assert xi.max() - xi.min() <= 2 * width + 1e-12
    assert rayleigh_arrays(m, arrs) > 0


def test_wpp_time_slab():
    p = P((4, 4, 1), (4, 4, 4), 4, dim=2, signs=(1, 1, -1))
    m = block_multiplier(p, "wave", G2)
    arrs = extremizer_arrays(p, "wpp", m)
    c = [m.group.coordinates(m.slot_points[j][a != 0]) for j, a in enumerate(arrs)]
    r1 = np.linalg.norm(c[0][:, :2], axis=1).mean()
    r2 = np.linalg.norm(c[1][:, :2], axis=1).mean()
    tau3 = c[2][:, 2]
    assert np.all(np.abs(tau3 + r1 + r2) <= 4 * (4 + 4 + 1))


def test_rotate_multiplier_below_bound():
    m = rotate_multiplier(2, 1, Q(1, 4))
    est = alt_max(m, AltMaxConfig(restarts=2, iterations=30, seed=0))
    assert 0 < est.lower <= 16 * rotate_bound(2, 1, Q(1, 4), 2)
