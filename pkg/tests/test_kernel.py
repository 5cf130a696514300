import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrising.exactsum import boundary_field, site_tail_bound
from lrising.kernel import (
    AnisoLRNN,
    BiAxialLR,
    BoxGeometry,
    Dobrushin,
    IsotropicLR,
    Minus,
    Plus,
    SpinConfiguration,
    bc_value,
    coupling,
    coupling_matrix,
    ground_state_pair,
    interaction_field,
    total_energy,
)

MODELS = [IsotropicLR(2.5), IsotropicLR(3.5), AnisoLRNN(1.5), BiAxialLR(1.5, 3.0)]
coords = st.integers(-30, 30)
sites = st.tuples(coords, coords)


def test_coupling_examples():
    assert coupling(IsotropicLR(2.5), (0, 0), (3, 4)) == pytest.approx(5 ** -2.5, rel=1e-14)
    assert coupling(AnisoLRNN(1.5), (0, 0), (2, 1)) == 0.0
    assert coupling(AnisoLRNN(1.5), (4, 0), (4, -1)) == 1.0
    assert coupling(AnisoLRNN(1.5), (0, 0), (0, 2)) == 0.0
    assert coupling(AnisoLRNN(1.5), (0, 3), (4, 3)) == pytest.approx(4 ** -1.5)
    assert coupling(BiAxialLR(1.5, 3.0), (0, 0), (0, 2)) == pytest.approx(0.125)
    assert coupling(BiAxialLR(1.5, 3.0), (0, 0), (1, 1)) == 0.0


@pytest.mark.parametrize("bad", [lambda: IsotropicLR(2.0), lambda: AnisoLRNN(1.0),
                                 lambda: BiAxialLR(1.5, 0.9), lambda: IsotropicLR(float("nan"))])
def test_model_invariants_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_self_coupling_rejected():
    with pytest.raises(ValueError):
        coupling(IsotropicLR(3.0), (1, 2), (1, 2))


@settings(max_examples=200, deadline=None)
@given(x=sites, y=sites, v=sites, m=st.sampled_from(MODELS))
def test_coupling_symmetries(x, y, v, m):
    if x == y:
        return
    J = coupling(m, x, y)
    assert J >= 0
    assert coupling(m, y, x) == J
    assert coupling(m, (x[0] + v[0], x[1] + v[1]), (y[0] + v[0], y[1] + v[1])) == J
    assert coupling(m, (-x[0], x[1]), (-y[0], y[1])) == J
    assert coupling(m, (x[0], -x[1]), (y[0], -y[1])) == J


@settings(max_examples=200, deadline=None)
@given(a=sites, b=sites)
def test_isotropic_monotone_in_distance(a, b):
    m = IsotropicLR(2.7)
    ra, rb = np.hypot(*a), np.hypot(*b)
    if a == (0, 0) or b == (0, 0) or ra == rb:
        return
    ja, jb = coupling(m, (0, 0), a), coupling(m, (0, 0), b)
    assert (ja > jb) == (ra < rb)


@pytest.mark.parametrize("m", MODELS)
def test_row_sum_finite(m):
    # partial row sums at radius R and 2R differ by at most the certified tail at R
    def partial(R):
        d = np.arange(-R, R + 1)
        di, dj = np.meshgrid(d, d, indexing="ij")
        inside = (di ** 2 + dj ** 2 <= R * R) & ((di != 0) | (dj != 0))
        return m.couplings(di[inside], dj[inside]).sum()

    R = 40
    assert 0 <= partial(2 * R) - partial(R) <= site_tail_bound(m, R)


def test_bc_value():
    assert bc_value(Dobrushin(0), (17, 0)) == 1
    assert bc_value(Dobrushin(1), (-3, 0)) == -1
    assert bc_value(Minus(), (5, 5)) == -1
    assert bc_value(Plus(), (5, -5)) == 1
    assert bc_value(Dobrushin(0).flipped(), (0, 3)) == -1


def test_box_geometry():
    box = BoxGeometry(2, 1)
    assert box.n_sites == 15 and box.shape == (3, 5)
    for k in range(box.n_sites):
        assert box.index(box.site(k)) == k
    assert box.site(0) == (-2, -1)
    assert BoxGeometry.square(3) == BoxGeometry(3, 3)
    sym = BoxGeometry.about_interface(3, 2, 1)
    assert (sym.j_min, sym.j_max) == (-1, 2) and sym.is_symmetric_about(1)
    assert BoxGeometry(3, 3).is_symmetric_about(0) is False
    with pytest.raises(ValueError):
        BoxGeometry(-1, 2)
    with pytest.raises(KeyError):
        box.index((3, 0))


def test_ground_state_pair():
    box = BoxGeometry(4, 4)
    gs, step = ground_state_pair(box)
    assert gs[(-2, 0)] == 1 and step[(-2, 0)] == -1
    assert gs[(3, 0)] == 1 and step[(3, 0)] == 1
    assert gs[(0, -4)] == -1 and step[(0, -4)] == -1
    assert gs[(0, 0)] == 1 and step[(0, 0)] == -1
    assert np.sum(gs.spins != step.spins) == 5


def test_spin_configuration_validation():
    box = BoxGeometry(1, 1)
    with pytest.raises(ValueError):
        SpinConfiguration(box, np.zeros(9, dtype=np.int8))
    with pytest.raises(ValueError):
        SpinConfiguration(box, np.ones(8, dtype=np.int8))


def test_interaction_field_matches_matrix():
    m = IsotropicLR(2.5)
    box = BoxGeometry(3, 2)
    rng = np.random.default_rng(0)
    s = rng.choice(np.array([-1, 1], dtype=np.int8), box.n_sites)
    np.testing.assert_allclose(interaction_field(m, box, s), coupling_matrix(m, box) @ s, rtol=1e-13)


@pytest.mark.parametrize("m", MODELS)
def test_single_site_energy(m):
    box = BoxGeometry(0, 0)
    f = boundary_field(m, box, Plus())
    up = SpinConfiguration.constant(box, 1)
    assert total_energy(m, box, Plus(), up, f) == pytest.approx(-f.values[0])
    assert total_energy(m, box, Plus(), up.flipped(), f) == pytest.approx(f.values[0])
    assert f.values[0] > 0


@pytest.mark.parametrize("m", MODELS)
def test_plus_ground_state_2x2(m):
    box = BoxGeometry(1, 0, 0, 1)  # 3 x 2
    f = boundary_field(m, box, Plus())
    energies = []
    for code in range(1 << box.n_sites):
        s = np.array([1 - 2 * ((code >> k) & 1) for k in range(box.n_sites)], dtype=np.int8)
        energies.append(total_energy(m, box, Plus(), SpinConfiguration(box, s), f))
    assert np.argmin(energies) == 0
    assert np.sum(np.isclose(energies, min(energies))) == 1


def test_dobrushin_flip_costs_energy():
    m = IsotropicLR(3.5)
    box = BoxGeometry(1, 1)
    bc = Dobrushin(0)
    f = boundary_field(m, box, bc)
    gs = SpinConfiguration.from_boundary(box, bc)
    center = gs.copy()
    center[(0, 0)] = -center[(0, 0)]
    # independent brute-force energy: pair sum plus exterior sum to radius 400
    R = 400
    ii, jj = box.coordinates()

    def brute(s):
        e = 0.0
        for a in range(box.n_sites):
            for b in range(box.n_sites):
                if a != b:
                    e -= 0.5 * coupling(m, (ii[a], jj[a]), (ii[b], jj[b])) * s[a] * s[b]
        d = np.arange(-R, R + 1)
        X, Y = np.meshgrid(d, d, indexing="ij")
        out = (np.abs(X) > 1) | (np.abs(Y) > 1)
        for a in range(box.n_sites):
            r2 = (X[out] - ii[a]) ** 2 + (Y[out] - jj[a]) ** 2
            e -= s[a] * np.sum(r2 ** (-1.75) * np.where(Y[out] >= 0, 1, -1))
        return e

    e_gs = total_energy(m, box, bc, gs, f)
    e_c = total_energy(m, box, bc, center, f)
    assert e_gs < e_c
    assert e_gs == pytest.approx(brute(gs.spins), abs=1e-3)
    assert e_c == pytest.approx(brute(center.spins), abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.sampled_from(MODELS), h=st.integers(-2, 3))
def test_global_flip_invariance(seed, m, h):
    box = BoxGeometry(2, 1)
    s = SpinConfiguration(box, np.random.default_rng(seed).choice(np.array([-1, 1], dtype=np.int8), box.n_sites))
    for bc in (Plus(), Dobrushin(h)):
        e = total_energy(m, box, bc, s, boundary_field(m, box, bc))
        e_flip = total_energy(m, box, bc.flipped(), s.flipped(), boundary_field(m, box, bc.flipped()))
        assert e == pytest.approx(e_flip, rel=1e-12, abs=1e-12)


def test_total_energy_rejects_mismatch():
    m = IsotropicLR(3.0)
    box = BoxGeometry(1, 1)
    f = boundary_field(m, BoxGeometry(2, 1), Plus())
    with pytest.raises(ValueError):
        total_energy(m, box, Plus(), SpinConfiguration.constant(box), f)
