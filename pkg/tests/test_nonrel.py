import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from bdflab.nonrel import (
    PEKAR_GAUSSIAN_WIDTH,
    NRChannelProblem,
    TruncationWarning,
    channel_energy,
    channel_minimize,
    exchange_norm_multiplet,
    gaussian_pekar_energy,
    gaussian_profile,
    interaction_kernel,
    multiplet_multipole_weights,
    pekar_energy,
    pekar_minimize,
    pekar_parts,
)
from bdflab.radial import RadialMesh

from oracles import load

ORACLE = load()
GAUSSIAN_MIN = -1 / (3 * np.pi)


@pytest.fixture(scope="module")
def mesh():
    return RadialMesh.log(1e-4, 60.0, 800)


def _dilate(mesh, f, lam):
    """f_lam(r) = lam^(3/2) f(lam r), resampled on the same mesh."""
    return lam**1.5 * mesh.interpolate(f, lam * mesh.r)


def _bumpy(mesh, lam, ell=0):
    """Smooth non-Gaussian profile r^l (1 + 0.3 r^2) exp(-r^2/8) at scale lam, normalized."""
    x = lam * mesh.r
    f = x**ell * (1 + 0.3 * x * x) * np.exp(-x * x / 8)
    return f / np.sqrt(mesh.integrate(f * f))


# ---------------------------------------------------------------------------
# Pekar functional


@pytest.mark.parametrize("sigma", [0.8, 2.0, PEKAR_GAUSSIAN_WIDTH, 6.0])
def test_gaussian_pekar_closed_form(mesh, sigma):
    f = gaussian_profile(mesh, sigma)
    assert pekar_energy(f, mesh) == pytest.approx(3 / (2 * sigma**2) - np.sqrt(2 / np.pi) / sigma, rel=1e-8)
    assert gaussian_pekar_energy(sigma) == pytest.approx(3 / (2 * sigma**2) - np.sqrt(2 / np.pi) / sigma)


def test_gaussian_optimum():
    sig = np.linspace(2.0, 8.0, 20001)
    vals = 3 / (2 * sig**2) - np.sqrt(2 / np.pi) / sig
    assert sig[np.argmin(vals)] == pytest.approx(3 * np.sqrt(np.pi / 2), abs=1e-3)
    assert gaussian_pekar_energy(PEKAR_GAUSSIAN_WIDTH) == pytest.approx(GAUSSIAN_MIN, rel=1e-14)
    assert GAUSSIAN_MIN == pytest.approx(-0.10610, abs=1e-5)


def test_pekar_rejects_unnormalized(mesh):
    f = gaussian_profile(mesh, 2.0)
    with pytest.raises(ValueError):
        pekar_energy(1.001 * f, mesh)


@given(st.floats(0.5, 2.0))
def test_pekar_scaling(lam):
    mesh = RadialMesh.log(1e-4, 80.0, 600)
    t, d = pekar_parts(_bumpy(mesh, 1.0), mesh)
    g = _bumpy(mesh, lam)
    assert pekar_energy(g, mesh) == pytest.approx(lam**2 * t - lam * d, rel=1e-6)


def test_pekar_minimizer(pekar):
    assert pekar.energy <= GAUSSIAN_MIN + 1e-4
    assert pekar.residual <= 1e-7
    assert pekar.mesh.integrate(pekar.profile**2) == pytest.approx(1.0, abs=1e-10)
    assert pekar.energy == pytest.approx(pekar.kinetic - pekar.interaction, abs=1e-14)
    assert pekar.kinetic > 0 and pekar.interaction > 0


def test_pekar_virial(pekar):
    vir = pekar.virial
    assert vir["T_over_minus_E"] == pytest.approx(1.0, abs=1e-3)
    assert vir["V_over_minus_2E"] == pytest.approx(1.0, abs=1e-3)


def test_pekar_mesh_refinement(pekar):
    coarse = pekar_minimize(RadialMesh.log(1e-4, 60.0, 400))
    assert coarse.energy == pytest.approx(pekar.energy, rel=2e-3)


def test_pekar_energy_decreases_along_flow(pekar):
    hist = np.array(pekar.history)
    assert np.all(np.diff(hist) <= 1024 * np.finfo(float).eps * abs(hist[0]))


def test_pekar_dilation_stationary(pekar):
    m = pekar.mesh
    for lam in (0.995, 1.005):
        g = _dilate(m, pekar.profile, lam)
        g /= np.sqrt(m.integrate(g * g))
        assert pekar_energy(g, m) - pekar.energy > -1e-6


def test_pekar_euler_lagrange(pekar):
    m = pekar.mesh
    f = pekar.profile
    # -Delta f - 2 (|psi|^2 * 1/|x|) f = -e^2 f with psi = f / sqrt(4 pi)
    kin = (m.kinetic_form(0.0) @ f) / m.w
    pot = (m.coulomb_matrix(0) @ (f * f)) / m.w
    res = kin - 2 * pot * f + pekar.eigenvalue * f
    assert np.sqrt(m.integrate(res * res)) <= 1e-4
    assert pekar.eigenvalue > 0


def test_pekar_gradient_matches_finite_differences(mesh):
    rng = np.random.default_rng(3)
    f = gaussian_profile(mesh, 3.0)
    for _ in range(3):
        dv = rng.normal(size=5) @ np.array([mesh.r**k * np.exp(-mesh.r / 2) for k in range(5)])
        dv -= mesh.integrate(f * dv) * f
        dv /= np.sqrt(mesh.integrate(dv * dv))
        grad = 2 * (mesh.kinetic_form(0.0) @ f) - 4 * f * (mesh.coulomb_matrix(0) @ (f * f))
        h = 1e-5

        def energy(g):
            tt, dd = pekar_parts(g, mesh)
            return tt - dd

        fd = (energy(f + h * dv) - energy(f - h * dv)) / (2 * h)
        assert grad @ dv == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# channel problems


def test_problem_labels():
    p = NRChannelProblem(0, 1, RadialMesh.log(n=64))
    assert (p.two_j0, p.ell, p.multiplicity, p.centrifugal) == (1, 1, 2, 2.0)
    q = NRChannelProblem(2, -1, RadialMesh.log(n=64))
    assert (q.two_j0, q.ell, q.centrifugal) == (5, 2, 6.0)
    with pytest.raises(ValueError):
        NRChannelProblem(0, 0, RadialMesh.log(n=64))
    with pytest.raises(ValueError):
        NRChannelProblem(0, 1, RadialMesh.log(n=64), "mystery")


def test_kinetic_only_gaussian_closed_form():
    mesh = RadialMesh.log(1e-4, 60.0, 1400)
    prob = NRChannelProblem(0, 1, mesh, "none")
    sigma = 1.7
    f = gaussian_profile(mesh, sigma, ell=1)
    prof = lambda r: r * np.exp(-r * r / (2 * sigma**2))  # noqa: E731
    dprof = lambda r: (1 - r * r / sigma**2) * np.exp(-r * r / (2 * sigma**2))  # noqa: E731
    norm = quad(lambda r: prof(r) ** 2 * r * r, 0, np.inf)[0]
    kin = quad(lambda r: dprof(r) ** 2 * r * r + 2.0 * prof(r) ** 2, 0, np.inf)[0]
    assert channel_energy(f, prob) == pytest.approx(2 * kin / norm, rel=1e-8)
    assert channel_energy(f, prob) == pytest.approx(2 * 2.5 / sigma**2, rel=1e-8)


@pytest.mark.parametrize("row", ORACLE["newton_double_sphere"], ids=lambda r: f"{r['r1']}-{r['r2']}-{r['two_j']}")
def test_product_density_kernel_matches_double_sphere(row):
    prob = NRChannelProblem((row["two_j"] - 1) // 2, 1, RadialMesh.log(n=64), "product-density")
    val = interaction_kernel(prob, row["r1"], row["r2"])
    assert float(val) == pytest.approx(row["value"], rel=1e-9)


def test_kernel_reproduces_interaction(mesh):
    for mode in ("product-density", "exchange-multipole"):
        prob = NRChannelProblem(1, 1, mesh, mode)
        f = gaussian_profile(mesh, 2.0, ell=prob.ell)
        # brute-force double sum with the pointwise kernel on a coarse sub-grid
        sub = RadialMesh.log(1e-3, 30.0, 700)
        g = mesh.interpolate(f, sub.r) ** 2
        ker = interaction_kernel(prob, sub.r[:, None], sub.r[None, :])
        direct = (g * sub.w) @ ker @ (g * sub.w)
        t = prob.multiplicity * float(f @ mesh.kinetic_form(prob.centrifugal) @ f)
        assert t - channel_energy(f, prob) == pytest.approx(direct, rel=2e-3)


@pytest.mark.parametrize("mode", ["product-density", "exchange-multipole"])
@given(lam=st.floats(0.5, 2.0))
def test_channel_energy_homogeneity(mode, lam):
    mesh = RadialMesh.log(1e-4, 80.0, 600)
    prob = NRChannelProblem(1, -1, mesh, mode)
    f = _bumpy(mesh, 1.0, prob.ell)
    t = prob.multiplicity * float(f @ mesh.kinetic_form(prob.centrifugal) @ f)
    v = t - channel_energy(f, prob)
    g = _bumpy(mesh, lam, prob.ell)
    assert channel_energy(g, prob) == pytest.approx(lam**2 * t - lam * v, rel=1e-6)
    # small enough lam makes the energy negative
    lam0 = 0.5 * v / t
    assert lam0**2 * t - lam0 * v < 0


@pytest.mark.parametrize("eps", [1, -1])
@pytest.mark.parametrize("mode", ["exchange-multipole", "product-density"])
def test_channel_minimizer(eps, mode):
    mesh = RadialMesh.log(1e-4, 100.0 if eps > 0 else 60.0, 800)
    prob = NRChannelProblem(0, eps, mesh, mode)
    res = channel_minimize(prob)
    assert res.energy < 0
    assert res.residual <= 1e-7
    f = res.profile
    t = prob.multiplicity * (mesh.kinetic_form(prob.centrifugal) @ f) / mesh.w
    pot = sum(c * (mesh.coulomb_matrix(big_l) @ (f * f)) for big_l, c in prob.weights().items()) / mesh.w
    resid = (t - 2 * pot * f) + res.eigenvalue * f
    assert np.sqrt(mesh.integrate(resid * resid)) <= 1e-4
    hist = np.array(res.history)
    assert np.all(np.diff(hist) <= 1024 * np.finfo(float).eps * abs(hist[0]))
    assert res.virial["T_over_minus_E"] == pytest.approx(1.0, abs=1e-3)


def test_s_wave_multiplets_reduce_to_pekar(pekar):
    mesh = pekar.mesh
    exch = channel_minimize(NRChannelProblem(0, -1, mesh, "exchange-multipole"))
    prod = channel_minimize(NRChannelProblem(0, -1, mesh, "product-density"))
    # kinetic doubles; interactions become 2 D and 4 D of the Pekar pairing
    assert exch.energy == pytest.approx(2 * pekar.energy, rel=1e-7)
    assert prod.energy == pytest.approx(8 * pekar.energy, rel=1e-7)


# ---------------------------------------------------------------------------
# exchange norm of a multiplet


@pytest.mark.parametrize("eps,key", [(-1, "s"), (1, "p")])
def test_multiplet_exchange_matches_6d_oracle(eps, key):
    mesh = RadialMesh.log(1e-4, 60.0, 800)
    prob = NRChannelProblem(0, eps, mesh)
    f = gaussian_profile(mesh, ORACLE["multiplet_exchange"]["width"], ell=prob.ell)
    assert exchange_norm_multiplet(f, prob) == pytest.approx(ORACLE["multiplet_exchange"][key], rel=0.01)


def test_s_multiplet_exchange_closed_form():
    mesh = RadialMesh.log(1e-4, 60.0, 800)
    w = 1.3
    f = gaussian_profile(mesh, w)
    # twice the self-energy of a unit Gaussian charge of standard deviation w / sqrt(2)
    assert exchange_norm_multiplet(f, NRChannelProblem(0, -1, mesh)) == pytest.approx(
        2 * np.sqrt(2) / (w * np.sqrt(np.pi)), rel=1e-8)


@given(st.integers(0, 2), st.sampled_from([1, -1]), st.floats(0.7, 4.0), st.floats(-2, 2))
def test_multiplet_exchange_nonnegative(ell0, eps, width, c):
    mesh = RadialMesh.log(1e-4, 60.0, 300)
    prob = NRChannelProblem(ell0, eps, mesh)
    f = mesh.r**prob.ell * (np.exp(-mesh.r**2 / width) + c * np.exp(-mesh.r))
    f /= np.sqrt(mesh.integrate(f * f))
    assert exchange_norm_multiplet(f, prob) >= 0


def test_exchange_increases_with_multipole_cutoff():
    mesh = RadialMesh.log(1e-4, 60.0, 400)
    f = gaussian_profile(mesh, 2.0, ell=2)
    vals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for l_max in range(0, 8):
            vals.append(exchange_norm_multiplet(f, NRChannelProblem(1, 1, mesh, l_max=l_max)))
    assert np.all(np.diff(vals) >= 0)
    assert vals[-1] > vals[0]


def test_truncation_warning():
    with pytest.warns(TruncationWarning):
        multiplet_multipole_weights(3, 2, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        multiplet_multipole_weights(3, 2, 8)


def test_multipole_weights_even_and_positive():
    w = multiplet_multipole_weights(3, 1, 8)
    assert all(big_l % 2 == 0 and c > 0 for big_l, c in w.items())
    # the monopole coefficient of the exchange norm equals the multiplicity 2j0 + 1
    assert w[0] == pytest.approx(4.0, rel=1e-10)
