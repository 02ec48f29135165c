import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdflab.radial import RadialMesh, hankel_transform, multipole_pairing, multipole_potential


def test_nodes_increasing_and_positive(mesh600):
    assert np.all(mesh600.r > 0)
    assert np.all(np.diff(mesh600.r) > 0)
    assert len(mesh600) == 600
    assert mesh600.r[0] == pytest.approx(1e-4)
    assert mesh600.r[-1] == pytest.approx(40.0)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_cubic_polynomials_integrate_exactly(mesh600, k):
    a, b = mesh600.r[0], mesh600.r[-1]
    exact = (b ** (k + 3) - a ** (k + 3)) / (k + 3)
    assert mesh600.integrate(mesh600.r**k) == pytest.approx(exact, rel=1e-12)


def test_unit_volume_on_short_mesh():
    mesh = RadialMesh.log(0.5, 3.0, 40)
    assert mesh.integrate(np.ones(40)) == pytest.approx((3.0**3 - 0.5**3) / 3, rel=1e-12)


def test_rejects_bad_ranges():
    with pytest.raises(ValueError):
        RadialMesh.log(2.0, 1.0, 100)
    with pytest.raises(ValueError):
        RadialMesh.log(1e-3, 10.0, 8)


def test_derivative_is_fourth_order():
    errs = []
    for n in (200, 400):
        mesh = RadialMesh.log(1e-3, 10.0, n)
        f = np.exp(-mesh.r**2)
        errs.append(np.max(np.abs(mesh.derivative(f) + 2 * mesh.r * f)))
    assert errs[1] < errs[0] / 10


def test_gaussian_norm_matches_closed_form(mesh600):
    sigma = 1.3
    f = np.exp(-mesh600.r**2 / (2 * sigma**2))
    assert mesh600.norm(f) ** 2 == pytest.approx(np.sqrt(np.pi) * sigma**3 / 4, rel=1e-10)


def test_newton_potential_outside_support(mesh600):
    r = mesh600.r
    rho = np.zeros_like(r)
    inside = r < 2.0
    rho[inside] = np.exp(-0.1 / (2.0 - r[inside]) ** 2)
    rho /= 4 * np.pi * mesh600.integrate(rho)
    v = 4 * np.pi * multipole_potential(mesh600, rho, 0)
    outside = r > 3.0
    assert np.max(np.abs(v[outside] - 1 / r[outside])) < 1e-10


def test_gaussian_self_energy(mesh600):
    s = 0.8
    r = mesh600.r
    rho = np.exp(-r**2 / (2 * s**2)) / (2 * np.pi * s**2) ** 1.5
    # the monopole coefficient of a radial density is sqrt(4 pi) rho
    d = np.real(multipole_pairing(mesh600, rho, rho, 0)) * 4 * np.pi
    assert d == pytest.approx(1 / (s * np.sqrt(np.pi)), rel=1e-8)


def test_gaussian_hankel_pair():
    src = RadialMesh.log(1e-4, 40.0, 1400)
    dst = RadialMesh.log(1e-4, 10.0, 1400)
    for sigma in (0.7, 1.5):
        f = np.exp(-src.r**2 / (2 * sigma**2))
        exact = sigma**3 * np.exp(-(dst.r**2) * sigma**2 / 2)
        assert np.max(np.abs(hankel_transform(f, 0, src, dst) - exact)) < 1e-8


def test_gaussian_hankel_pair_p_wave():
    src = RadialMesh.log(1e-4, 40.0, 1400)
    dst = RadialMesh.log(1e-4, 10.0, 1400)
    sigma = 1.1
    f = src.r * np.exp(-src.r**2 / (2 * sigma**2))
    exact = sigma**5 * dst.r * np.exp(-(dst.r**2) * sigma**2 / 2)
    assert np.max(np.abs(hankel_transform(f, 1, src, dst) - exact)) < 1e-8


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_coulomb_pairing_symmetric_and_positive(s1, s2):
    mesh = RadialMesh.log(1e-4, 40.0, 300)
    r1 = np.exp(-mesh.r**2 / s1**2)
    r2 = mesh.r * np.exp(-mesh.r / s2)
    for ell in (0, 1, 2):
        a = multipole_pairing(mesh, r1, r2, ell)
        b = multipole_pairing(mesh, r2, r1, ell)
        assert abs(a - np.conj(b)) < 1e-12 * max(abs(a), 1e-300)
        assert np.real(multipole_pairing(mesh, r1 - r2, r1 - r2, ell)) >= 0


def test_interpolate_reproduces_nodes_and_decays_outside(mesh600):
    f = np.exp(-mesh600.r)
    assert np.allclose(mesh600.interpolate(f, mesh600.r[10:20]), f[10:20], atol=1e-14)
    x = np.array([0.37, 2.5, 11.0])
    assert np.allclose(mesh600.interpolate(f, x), np.exp(-x), rtol=1e-8)
