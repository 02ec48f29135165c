import numpy as np
import pytest

from bdflab.dressing import paired_meshes
from bdflab.galerkin import TruncatedBasis, multiplet_basis
from bdflab.vacpol import (
    GapClosure,
    cauchy_term,
    cauchy_terms,
    first_order_exact,
    hs_norm,
    kinetic_estimate,
    perturbation,
    vacuum_projector,
)

ALPHAS = (0.01, 0.02, 0.04)


def _c_pair(basis, vec):
    x = basis.positive_projector() @ vec
    x = x / np.linalg.norm(x)
    cx = basis.apply_c(x)
    return np.outer(x, x.conj()) - np.outer(cx, cx.conj())


@pytest.fixture(scope="module")
def pair_q(small_multiplet):
    e, v = small_multiplet.d0_spectrum()
    pos = v[:, e > 0]
    return _c_pair(small_multiplet, pos[:, 0] + 0.5 * pos[:, 1])


def _exchange_size(q, basis):
    return float(np.sqrt(np.real(np.trace(q @ basis.exchange_matrix(q)))))


def test_zero_state_gives_zero_response(small_multiplet):
    z = np.zeros((small_multiplet.dim,) * 2, dtype=complex)
    assert np.max(np.abs(vacuum_projector(z, small_multiplet))) < 1e-12
    assert np.max(np.abs(cauchy_term(1, z, small_multiplet))) == 0.0
    assert kinetic_estimate(np.zeros_like(z), small_multiplet) == 0.0


def test_projector_structure(small_multiplet, pair_q):
    b = small_multiplet
    for a in ALPHAS:
        g = vacuum_projector(pair_q, b, alpha=a)
        p = g + b.vacuum_projector()
        assert np.max(np.abs(p @ p - p)) < 1e-10
        assert np.linalg.norm(g, 2) < 1
        # charge on the truncation is an integer (here zero)
        pp = b.positive_projector()
        pm = b.vacuum_projector()
        tr = np.trace(pp @ g @ pp + pm @ g @ pm).real
        assert abs(tr - round(tr)) < 1e-8


def test_response_inherits_charge_symmetry(small_multiplet, pair_q):
    g = vacuum_projector(pair_q, small_multiplet, alpha=0.04)
    assert np.max(np.abs(small_multiplet.conjugate_operator(g) + g)) < 1e-10


def test_gap_closure(small_multiplet, pair_q):
    with pytest.raises(GapClosure):
        vacuum_projector(pair_q, small_multiplet, alpha=0.0, extra=-small_multiplet.d0_matrix())


def test_perturbation_is_hermitian_and_linear(small_multiplet, pair_q):
    y1 = perturbation(pair_q, small_multiplet, alpha=0.01)
    y2 = perturbation(pair_q, small_multiplet, alpha=0.03)
    assert np.allclose(y1, y1.conj().T, atol=0)
    assert np.allclose(3 * y1, y2, atol=1e-15)
    extra = np.eye(small_multiplet.dim)
    assert np.allclose(perturbation(pair_q, small_multiplet, 0.01, extra) - y1, extra, atol=1e-15)


def test_first_order_resolvent_matches_closed_form(small_multiplet, pair_q):
    m1 = cauchy_term(1, pair_q, small_multiplet)
    exact = first_order_exact(pair_q, small_multiplet)
    assert np.max(np.abs(m1 - exact)) < 1e-10 * max(1.0, np.max(np.abs(exact)))


def test_cauchy_terms_hermitian_and_ordered(small_multiplet, pair_q):
    terms = cauchy_terms(pair_q, small_multiplet, orders=3, alpha=0.04)
    assert terms.hermiticity() < 1e-10
    g = vacuum_projector(pair_q, small_multiplet, alpha=0.04)
    errs = [hs_norm(g - terms.partial_sum(k)) for k in (1, 2, 3)]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(ValueError):
        cauchy_term(4, pair_q, small_multiplet)


def test_first_order_remainder_is_quadratic(small_multiplet, pair_q):
    rem = []
    for a in ALPHAS:
        g = vacuum_projector(pair_q, small_multiplet, alpha=a)
        rem.append(hs_norm(g - cauchy_term(1, pair_q, small_multiplet, alpha=a)))
    slope = np.polyfit(np.log(ALPHAS), np.log(rem), 1)[0]
    assert slope >= 1.8
    assert max(r / a**2 for r, a in zip(rem, ALPHAS)) < 2 * min(r / a**2 for r, a in zip(rem, ALPHAS))


def test_smallness_ratios_are_stable(small_multiplet, pair_q):
    size = _exchange_size(pair_q, small_multiplet)
    log_l = np.log(small_multiplet.dispersion.cutoff)
    hs, kin = [], []
    for a in ALPHAS:
        g = vacuum_projector(pair_q, small_multiplet, alpha=a)
        hs.append(hs_norm(g) / (a * size))
        kin.append(kinetic_estimate(g, small_multiplet) / (np.sqrt(log_l * a) * size))
    print(f"HS ratio {hs}, kinetic ratio {kin}")
    assert max(hs) < 1.05 * min(hs)
    assert all(np.isfinite(kin)) and max(kin) < 1.0


def test_kinetic_estimate_settles_under_refinement(dressed):
    mesh, _ = paired_meshes(1.0, 1500, 1e-4, 80.0, 1e-4, 40.0)
    coarse = multiplet_basis(dressed, two_j=1, n_rad=6, s_min=1.0, s_max=4.0)
    e, v = coarse.d0_spectrum()
    orb = coarse.to_orbital(v[:, e > 0][:, 0], mesh)
    vals = []
    for n in (8, 10, 12, 14):
        b = TruncatedBasis(coarse.channels, dressed, 3.0 / 1.5 ** np.arange(n))
        g = vacuum_projector(_c_pair(b, b.from_orbital(orb)), b)
        vals.append(kinetic_estimate(g, b))
    for before, after in zip(vals, vals[1:]):
        assert after >= 0.98 * before
        assert abs(after - before) <= 0.02 * before
