import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdflab.radial import RadialMesh
from bdflab.spinors import (
    BETA,
    SIGMA,
    AngularChannel,
    ChannelOrbital,
    apply_is,
    charge_conjugate,
    channel_spinor,
    multiplet_density,
    radial_kinetic_coupling,
    random_directions,
    sphere_rule,
    spherical_spinor,
)

complex4 = st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                    min_size=4, max_size=4).map(lambda v: np.array(v, dtype=complex))
real4 = st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4).map(lambda v: np.array(v, dtype=complex))

CHANNELS = [AngularChannel(tj, tm, e) for tj in (1, 3, 5) for tm in range(-tj, tj + 1, 2) for e in (1, -1)]


def sigma_dot(n):
    return np.einsum("...k,kab->...ab", n, SIGMA)


# ---------------------------------------------------------------------------
# C and I_s on single spinors


def test_conjugation_of_first_basis_vector():
    assert np.array_equal(charge_conjugate(np.array([1, 0, 0, 0], dtype=complex)), [0, 0, 0, 1])


def test_conjugation_componentwise():
    s = np.array([1 + 2j, 3 - 1j, -2j, 0.5])
    assert np.allclose(charge_conjugate(s), [0.5, -2j, -3 - 1j, 1 - 2j])


@given(complex4)
def test_conjugation_is_involution(s):
    assert np.allclose(charge_conjugate(charge_conjugate(s)), s, rtol=0, atol=0)


@given(complex4)
def test_conjugation_preserves_pointwise_norm(s):
    assert np.sum(np.abs(charge_conjugate(s)) ** 2) == pytest.approx(np.sum(np.abs(s) ** 2), rel=1e-14)


def test_is_block_map():
    assert np.array_equal(apply_is(np.array([0, 0, 1, 0], dtype=complex)), [-1, 0, 0, 0])


@given(complex4)
def test_is_squares_to_minus_identity(s):
    assert np.array_equal(apply_is(apply_is(s)), -s)


@given(real4)
def test_is_form_is_imaginary_on_real_spinors(s):
    assert np.real(np.vdot(s, apply_is(s))) == pytest.approx(0.0, abs=1e-9)


def test_spinor_maps_act_on_batches():
    s = np.arange(12, dtype=complex).reshape(3, 4)
    assert apply_is(s).shape == (3, 4)
    assert np.allclose(charge_conjugate(s)[1], charge_conjugate(s[1]))


# ---------------------------------------------------------------------------
# angular channels


@pytest.mark.parametrize("args", [(0, 0, 1), (2, 0, 1), (1, 3, 1), (1, 1, 0), (3, 2, -1)])
def test_channel_rejects_invalid_labels(args):
    with pytest.raises(ValueError):
        AngularChannel(*args)


def test_channel_quantum_numbers():
    ch = AngularChannel(3, -1, 1)
    assert (ch.j, ch.m, ch.kappa) == (1.5, -0.5, 2.0)
    assert (ch.ell_upper, ch.ell_lower) == (2, 1)
    minus = AngularChannel(3, -1, -1)
    assert (minus.kappa, minus.ell_upper, minus.ell_lower) == (-2.0, 1, 2)
    assert ch.conjugate() == AngularChannel(3, 1, -1)


def test_s_wave_spinor_is_constant():
    n = random_directions(20, seed=3)
    psi = spherical_spinor(1, 1, 0, n)
    assert np.allclose(psi[:, 0], 1 / np.sqrt(4 * np.pi), atol=1e-15)
    assert np.allclose(psi[:, 1], 0.0, atol=1e-15)


def test_spinor_rejects_bad_ell():
    with pytest.raises(ValueError):
        spherical_spinor(1, 1, 2, random_directions(2))


@pytest.mark.parametrize("two_j", [1, 3, 5])
@pytest.mark.parametrize("half", [-1, 1])
def test_spinors_orthonormal_on_sphere(two_j, half):
    ell = (two_j + half) // 2
    pts, w = sphere_rule(12)
    vals = [spherical_spinor(two_j, tm, ell, pts) for tm in range(-two_j, two_j + 1, 2)]
    gram = np.array([[np.sum(w * np.sum(np.conj(a) * b, axis=1)) for b in vals] for a in vals])
    assert np.allclose(gram, np.eye(len(vals)), atol=1e-13)


@pytest.mark.parametrize("two_j", [1, 3, 5])
def test_sigma_n_exchanges_the_two_orbital_partners(two_j):
    n = random_directions(50, seed=two_j)
    sn = sigma_dot(n)
    lo, hi = (two_j - 1) // 2, (two_j + 1) // 2
    for tm in range(-two_j, two_j + 1, 2):
        a = spherical_spinor(two_j, tm, lo, n)
        b = spherical_spinor(two_j, tm, hi, n)
        assert np.max(np.abs(np.einsum("nab,nb->na", sn, a) - b)) < 1e-13
        assert np.max(np.abs(np.einsum("nab,nb->na", sn, b) - a)) < 1e-13


def test_ladder_relation_with_factor_i_is_obstructed():
    # (i sigma.n)^2 = -1, so i sigma.n cannot swap the two partners in both directions
    n = random_directions(10, seed=7)
    isn = 1j * sigma_dot(n)
    assert np.allclose(np.einsum("nab,nbc->nac", isn, isn), -np.eye(2))
    a = spherical_spinor(1, 1, 0, n)
    b = spherical_spinor(1, 1, 1, n)
    err = np.linalg.norm(np.einsum("nab,nb->na", isn, a) - b, axis=1)
    assert np.allclose(err, np.sqrt(2) * np.linalg.norm(b, axis=1))


def test_multiplet_density_s_wave():
    n = random_directions(100, seed=11)
    assert np.allclose(multiplet_density(1, 0, n), 1 / (2 * np.pi), atol=1e-15)


@pytest.mark.parametrize("two_j,ell", [(1, 0), (1, 1), (3, 1), (3, 2), (5, 2), (5, 3), (7, 4)])
def test_multiplet_density_is_isotropic(two_j, ell):
    n = random_directions(100, seed=two_j + ell)
    dens = multiplet_density(two_j, ell, n)
    assert np.max(np.abs(dens - (two_j + 1) / (4 * np.pi))) < 1e-12
    pts, w = sphere_rule(10)
    assert np.sum(w * multiplet_density(two_j, ell, pts)) == pytest.approx(two_j + 1, rel=1e-13)


# ---------------------------------------------------------------------------
# J^2, J_z and spin-orbit on channel spinors, by finite differences in x


def _angular_momentum(fun, x, h=1e-4):
    """Components of L f = -i x cross grad f for a degree-0 homogeneous f."""
    grads = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grads.append((fun(x + e) - fun(x - e)) / (2 * h))
    g = np.array(grads)
    return -1j * np.array([x[1] * g[2] - x[2] * g[1], x[2] * g[0] - x[0] * g[2], x[0] * g[1] - x[1] * g[0]])


@pytest.mark.parametrize("ch", [AngularChannel(1, 1, 1), AngularChannel(1, -1, -1), AngularChannel(3, 1, 1),
                                AngularChannel(3, -3, -1), AngularChannel(5, 3, 1)])
def test_channel_spinor_is_j2_jz_and_spin_orbit_eigenstate(ch):
    x = np.array([0.31, -0.52, 0.79])
    x /= np.linalg.norm(x)

    def upper(y):
        return channel_spinor(ch, 0, y / np.linalg.norm(y))

    val = upper(x)
    big_sigma = np.zeros((3, 4, 4), dtype=complex)
    big_sigma[:, :2, :2] = SIGMA
    big_sigma[:, 2:, 2:] = SIGMA
    lvec = _angular_momentum(upper, x)
    sigma_l = sum(big_sigma[k] @ lvec[k] for k in range(3))
    # Dirac spin-orbit operator beta (1 + Sigma.L) acts as -kappa
    assert np.allclose(BETA @ (val + sigma_l), -ch.kappa * val, atol=1e-7)

    def l_component(k):
        return lambda y: _angular_momentum(upper, y / np.linalg.norm(y))[k]

    l_sq = sum(_angular_momentum(l_component(k), x, h=1e-3)[k] for k in range(3))
    j_sq = l_sq + sigma_l + 0.75 * val
    assert np.allclose(j_sq, ch.j * (ch.j + 1) * val, atol=1e-5)
    jz = lvec[2] + 0.5 * big_sigma[2] @ val
    assert np.allclose(jz, ch.m * val, atol=1e-7)


# ---------------------------------------------------------------------------
# orbitals


@pytest.fixture(scope="module")
def mesh():
    return RadialMesh.log(1e-4, 30.0, 400)


def _random_orbital(mesh, ch, seed):
    g = np.random.default_rng(seed)
    c = g.normal(size=4) + 1j * g.normal(size=4)
    r = mesh.r
    up = (c[0] + c[1] * r) * r**ch.ell_upper * np.exp(-r**2 / 3)
    lo = (c[2] + c[3] * r) * r**ch.ell_lower * np.exp(-r**2 / 5)
    return ChannelOrbital(ch, up, lo, mesh)


@pytest.mark.parametrize("ch", CHANNELS[::3])
def test_c_and_is_are_isometries(mesh, ch):
    orb = _random_orbital(mesh, ch, 5)
    for image in (orb.charge_conjugated(), orb.inversion_partner()):
        assert image.norm() == pytest.approx(orb.norm(), rel=1e-12)


@pytest.mark.parametrize("ch", CHANNELS[::2])
def test_conjugated_orbital_matches_pointwise_c(mesh, ch):
    orb = _random_orbital(mesh, ch, 8)
    image = orb.charge_conjugated()
    assert image.channel == AngularChannel(ch.two_j, -ch.two_m, -ch.eps)
    x = random_directions(30, seed=2) * np.linspace(0.2, 3.0, 30)[:, None]
    assert np.allclose(image.values(x), charge_conjugate(orb.values(x)), atol=1e-12)


@pytest.mark.parametrize("ch", CHANNELS[1::2])
def test_inversion_partner_matches_pointwise_is(mesh, ch):
    orb = _random_orbital(mesh, ch, 9)
    image = orb.inversion_partner()
    assert image.channel == AngularChannel(ch.two_j, ch.two_m, -ch.eps)
    x = random_directions(30, seed=4) * np.linspace(0.2, 3.0, 30)[:, None]
    assert np.allclose(image.values(x), apply_is(orb.values(x)), atol=1e-12)


def test_orbital_norm_uses_both_components(mesh):
    ch = AngularChannel(1, 1, -1)
    up = np.exp(-mesh.r**2 / 2)
    orb = ChannelOrbital(ch, up, 2 * up, mesh)
    assert orb.norm() ** 2 == pytest.approx(5 * np.sqrt(np.pi) / 4, rel=1e-10)
    assert orb.normalized().norm() == pytest.approx(1.0, rel=1e-14)


def test_kinetic_coupling_kernel():
    mesh = RadialMesh.log(1e-2, 10.0, 800)
    for ch in (AngularChannel(1, 1, 1), AngularChannel(3, 1, -1), AngularChannel(3, 3, 1)):
        a = mesh.r ** (-ch.eps * (ch.two_j + 1) / 2)
        out = radial_kinetic_coupling(ChannelOrbital.pure_upper(ch, a, mesh))
        assert np.max(np.abs(out[2:-2] * mesh.r[2:-2] / a[2:-2])) < 1e-8


def test_kinetic_coupling_of_linear_profile():
    mesh = RadialMesh.log(1e-2, 10.0, 400)
    out = radial_kinetic_coupling(ChannelOrbital.pure_upper(AngularChannel(1, 1, 1), mesh.r, mesh))
    assert np.allclose(out, 2.0, atol=1e-10)


@given(st.floats(-3, 3), st.floats(0.2, 4.0), st.sampled_from(CHANNELS[:8]))
def test_kinetic_coupling_is_linear(c, width, ch):
    mesh = RadialMesh.log(1e-3, 20.0, 200)
    a = np.exp(-mesh.r**2 / width)
    b = mesh.r**2 * np.exp(-mesh.r)
    lhs = radial_kinetic_coupling(ChannelOrbital.pure_upper(ch, a + c * b, mesh))
    rhs = (radial_kinetic_coupling(ChannelOrbital.pure_upper(ch, a, mesh))
           + c * radial_kinetic_coupling(ChannelOrbital.pure_upper(ch, b, mesh)))
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_kinetic_coupling_requires_pure_upper(mesh):
    ch = AngularChannel(1, 1, 1)
    with pytest.raises(ValueError):
        radial_kinetic_coupling(ChannelOrbital(ch, mesh.r, mesh.r, mesh))
