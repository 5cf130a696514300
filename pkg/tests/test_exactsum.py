import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrising.exactsum import (
    STEP_ENERGY_PREFACTOR,
    DivergenceError,
    boundary_field,
    power_tail,
    relative_entropy_bound,
    shift_energy_bound,
    step_energy,
    tail_bound,
    zeta_oracle,
)
from lrising.kernel import AnisoLRNN, BiAxialLR, BoxGeometry, Dobrushin, IsotropicLR, Minus, Plus


def test_zeta_oracle_closed_forms():
    assert zeta_oracle(2.0) == pytest.approx(math.pi ** 2 / 6, abs=1e-12)
    assert zeta_oracle(4.0) == pytest.approx(math.pi ** 4 / 90, abs=1e-12)
    assert zeta_oracle(1.5) == pytest.approx(2.6123753486854883, abs=1e-11)
    with pytest.raises(ValueError):
        zeta_oracle(1.0)


def test_zeta_oracle_against_partial_sum():
    # partial sum to 10^6 plus the integral bracket for the remainder
    n = np.arange(1, 10 ** 6, dtype=float)
    head = math.fsum(n ** -1.5)
    N = 10 ** 6
    lo = head + N ** -0.5 / 0.5
    hi = head + N ** -1.5 + N ** -0.5 / 0.5
    assert lo <= zeta_oracle(1.5) <= hi


@pytest.mark.parametrize("alpha", [2.2, 2.5, 3.0, 3.5])
def test_step_energy_is_zeta(alpha):
    v = step_energy(alpha, 1e-7)
    assert v.tail_bound <= 1e-7
    assert abs(v.value - zeta_oracle(alpha - 1, 1e-12)) <= v.tail_bound + 1e-12


def test_step_energy_near_pole_and_divergence():
    v = step_energy(2.01, 1e-4)
    assert v.value == pytest.approx(zeta_oracle(1.01), abs=1e-4)
    assert 100 < v.value < 101
    with pytest.raises(DivergenceError):
        step_energy(2.0)
    assert STEP_ENERGY_PREFACTOR == 2


def test_step_energy_refinement():
    coarse = step_energy(2.5, 1e-4)
    fine = step_energy(2.5, 1e-8)
    assert fine.truncation_radius > coarse.truncation_radius
    assert coarse.contains(fine.value)


def test_tail_bound_examples():
    assert tail_bound(AnisoLRNN(1.5), 100) == pytest.approx(0.2)
    n = np.arange(101, 10 ** 7 + 1, dtype=float)
    assert tail_bound(AnisoLRNN(1.5), 100) >= math.fsum(n ** -1.5)
    m = IsotropicLR(2.5)
    assert tail_bound(m, 20) / tail_bound(m, 10) == pytest.approx(2 ** -0.5, rel=1e-14)
    with pytest.raises(ValueError):
        tail_bound(m, 1)


def test_isotropic_tail_bound_dominates():
    m = IsotropicLR(4.0)
    R, Rmax = 10, 3000
    d = np.arange(-Rmax, Rmax + 1, dtype=float)
    X, Y = np.meshgrid(d, d, indexing="ij")
    r2 = X ** 2 + Y ** 2
    ring = (r2 > R * R)
    partial = np.sum(r2[ring] ** -2.0)
    # beyond the square of half-side Rmax the mass is at most the bound at Rmax
    assert partial <= tail_bound(m, R)
    assert tail_bound(m, 1000) == pytest.approx(tail_bound(m, 10) * 1e-4, rel=1e-12)


def test_power_tail_brackets():
    mid, half = power_tail(1.5, 101)
    n = np.arange(101, 10 ** 7 + 1, dtype=float)
    exact = math.fsum(n ** -1.5) + (10 ** 7 + 0.5) ** -0.5 / 0.5
    assert abs(exact - mid) <= half


@pytest.mark.parametrize("m", [IsotropicLR(3.0), AnisoLRNN(1.5), BiAxialLR(1.5, 3.0)])
def test_plus_field_positive(m):
    f = boundary_field(m, BoxGeometry(2, 2), Plus())
    assert np.all(f.values > 0)
    assert np.all(f.tail_bounds <= 1e-9)
    np.testing.assert_allclose(boundary_field(m, BoxGeometry(2, 2), Minus()).values, -f.values)


@pytest.mark.parametrize("m", [IsotropicLR(3.0), IsotropicLR(2.5), AnisoLRNN(1.5), BiAxialLR(1.5, 3.0)])
def test_dobrushin_mirror_identity(m):
    # exterior flips under j -> -1 - j only when the box rows are symmetric about -1/2
    box = BoxGeometry.about_interface(5, 5, 0)
    g = boundary_field(m, box, Dobrushin(0)).grid()
    np.testing.assert_allclose(g, -g[::-1], rtol=1e-12, atol=1e-12)


def test_dobrushin_field_signs():
    f = boundary_field(IsotropicLR(3.0), BoxGeometry(5, 5), Dobrushin(0))
    assert f((0, 3)).value > 0 > f((0, -3)).value


def test_dobrushin_field_brute_force():
    m = IsotropicLR(2.5)
    box = BoxGeometry(3, 3)
    R = 2000
    d = np.arange(-R, R + 1, dtype=float)
    X, Y = np.meshgrid(d, d, indexing="ij")
    disk = (X ** 2 + Y ** 2 <= R * R) & ((np.abs(X) > 3) | (np.abs(Y) > 3))
    r2 = X[disk] ** 2 + Y[disk] ** 2
    brute = np.sum(r2 ** -1.25 * np.where(Y[disk] >= 0, 1.0, -1.0))
    c = boundary_field(m, box, Dobrushin(0))((0, 0))
    # the disk leaves out an antisymmetric remainder of order R^(1 - alpha)
    assert abs(c.value - brute) <= c.tail_bound + 4 * math.pi * R ** -1.5


def test_boundary_field_refinement():
    m = IsotropicLR(2.5)
    box = BoxGeometry(3, 2)
    coarse = boundary_field(m, box, Dobrushin(1), 1e-5)
    fine = boundary_field(m, box, Dobrushin(1), 1e-10)
    assert np.all(np.abs(fine.values - coarse.values) <= coarse.tail_bounds + fine.tail_bounds)


def test_shift_bound_dichotomy():
    D35 = [shift_energy_bound(IsotropicLR(3.5), L).value for L in (10, 20, 40, 80)]
    inc = np.diff(D35)
    assert np.all(inc > 0) and np.all(inc[1:] < inc[:-1])
    D25 = [shift_energy_bound(IsotropicLR(2.5), L).value for L in (10, 20, 40, 80)]
    assert np.all(np.array(D25[1:]) / np.array(D25[:-1]) > 1.2)
    with pytest.raises(TypeError):
        shift_energy_bound(AnisoLRNN(1.5), 10)


def test_shift_bound_brute_force():
    m = IsotropicLR(3.0)
    L = 3
    i = np.arange(-L, L + 1)
    n = np.arange(L + 1, 200001, dtype=float)
    total = 0.0
    for ix in i:
        for jx in i:
            total += np.sum(((n - ix) ** 2 + jx ** 2) ** -1.5) + np.sum(((n + ix) ** 2 + jx ** 2) ** -1.5)
    v = shift_energy_bound(m, L)
    # the row beyond 2e5 carries less than 2 (2L+1)^2 * 2 / (2 * 2e5^2)
    assert 0 <= v.value - 2 * total <= v.tail_bound + 2 * 49 * 2e5 ** -2


def test_relative_entropy_bound_profile():
    m = IsotropicLR(2.5)
    unit = relative_entropy_bound(m, 8, 8)
    assert relative_entropy_bound(m, 8, 8, 0.0).value == 0.0
    half = relative_entropy_bound(m, 8, 8, 0.5)
    assert half.value == pytest.approx(0.5 * unit.value, rel=1e-12)
    with pytest.raises(ValueError):
        relative_entropy_bound(m, 8, 0)
    rec = unit.to_record("relative_entropy_bound", alpha=2.5, L=8, ell=8)
    assert json.loads(json.dumps(rec))["truncation_radius"] == unit.truncation_radius


@settings(max_examples=15, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=1, max_size=6), q=st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_relative_entropy_monotone_in_profile(p, q):
    m = IsotropicLR(3.0)
    big = np.array(p + [p[-1]] * (6 - len(p)))
    small = big * np.array(q)
    lo = relative_entropy_bound(m, 4, 3, small)
    hi = relative_entropy_bound(m, 4, 3, big)
    assert lo.value <= hi.value + lo.tail_bound + hi.tail_bound


def test_relative_entropy_brute_force():
    m = IsotropicLR(3.0)
    L, ell = 2, 2
    ix = np.arange(-L, L + 1)[:, None, None]
    jx = np.arange(1, 1201)[None, :, None]
    near_iy = np.arange(L, L + ell + 1)[None, None, :]
    near = np.sum(((near_iy - ix) ** 2.0 + jx ** 2.0) ** -1.5)
    far_iy = np.arange(L + ell + 1, 3001)[None, None, :]
    far = np.sum(((far_iy - ix) ** 2.0 + (jx - 1.0) ** 2.0) ** -1.5 - ((far_iy - ix) ** 2.0 + jx ** 2.0) ** -1.5)
    v = relative_entropy_bound(m, L, ell)
    # truncations at j = 1200 and i_y = 3000 drop less than 1e-3
    assert 0 <= v.value - 2 * (near + far) <= 1e-3
